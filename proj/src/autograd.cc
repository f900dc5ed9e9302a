// Copyright 2026 The fedsal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "fedsal/autograd.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsal/error.h"

namespace fedsal {
namespace ag {

const Tensor& Var::value() const {
  FEDSAL_CHECK(tape_ != nullptr, "use of an unbound Var");
  return tape_->value(*this);
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::conv2d: return "conv2d";
    case Op::add: return "add";
    case Op::add_bias: return "add_bias";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::exp: return "exp";
    case Op::square: return "square";
    case Op::clamp: return "clamp";
    case Op::minimum: return "minimum";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::reshape: return "reshape";
    case Op::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value supplied as a differentiable leaf");
  nodes_.push_back({Op::leaf, std::move(value), std::nullopt, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value supplied as a constant");
  nodes_.push_back({Op::leaf, std::move(value), std::nullopt, false, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Op op, Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  if (!value.all_finite())
    throw NumericError("non-finite output from primitive '" + std::string(op_name(op)) + "'");
  bool needs = false;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const Var& v : inputs) {
    FEDSAL_CHECK(v.tape() == this, "primitive inputs must live on the same tape");
    ids.push_back(v.id());
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back({op, std::move(value), std::nullopt, needs, std::move(ids),
                    needs ? std::move(backward) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad) n.grad.emplace(n.value.shape());
  return n.grad->data();
}

void Tape::backward(Var loss) {
  FEDSAL_CHECK(loss.tape() == this, "backward target belongs to another tape");
  FEDSAL_CHECK(value(loss).numel() == 1, "backward target must be a scalar, got " + shape_str(value(loss).shape()));
  for (auto& n : nodes_) n.grad.reset();
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.grad || !n.backward) continue;
    n.backward(*this, *n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  return n.grad ? *n.grad : Tensor(n.value.shape());
}

namespace {

void require_rank(Var v, std::size_t rank, std::string_view op) {
  FEDSAL_CHECK(v.shape().size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                             " input, got " + shape_str(v.shape()));
}

void require_same_shape(Var a, Var b, std::string_view op) {
  FEDSAL_CHECK(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                           shape_str(b.shape()));
}

// out[i] = f(a[i]); d/da = df(a[i], out[i]).
template <typename F, typename DF>
Var unary(Op op, Var a, F f, DF df) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = f(av[i]);
  const std::size_t ai = a.id();
  const std::size_t oi = t.size();
  return t.record(op, std::move(out), {a}, [ai, oi, df](Tape& tape, const Tensor& g) {
    if (!tape.requires_grad(ai)) return;
    const Tensor& x = tape.value(ai);
    const Tensor& y = tape.value(oi);
    auto ga = tape.grad_buffer(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  FEDSAL_CHECK(b.shape()[0] == k, "matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tape& t = *a.tape();
  const double* A = a.value().raw();
  const double* B = b.value().raw();
  Tensor out({m, n});
  double* C = out.raw();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(Op::matmul, std::move(out), {a, b}, [ai, bi, m, k, n](Tape& tape, const Tensor& g) {
    const double* G = g.raw();
    if (tape.requires_grad(ai)) {
      const double* Bv = tape.value(bi).raw();
      auto ga = tape.grad_buffer(ai);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * Bv[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (tape.requires_grad(bi)) {
      const double* Av = tape.value(ai).raw();
      auto gb = tape.grad_buffer(bi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = Av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  const Tensor& av = a.value();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  const std::size_t ai = a.id();
  return a.tape()->record(Op::transpose, std::move(out), {a}, [ai, r, c](Tape& tape, const Tensor& g) {
    auto ga = tape.grad_buffer(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

namespace {

struct ConvGeometry {
  std::size_t batch, in_ch, h, w, out_ch, k, stride, pad, oh, ow;

  // Output columns ow for which iw = ow*stride - pad + kw lies inside [0, w).
  std::pair<std::size_t, std::size_t> valid_range(std::size_t kpos, std::size_t extent, std::size_t out_extent) const {
    // first o with o*stride + kpos >= pad
    std::size_t lo = 0;
    if (kpos < pad) lo = (pad - kpos + stride - 1) / stride;
    // last o with o*stride + kpos - pad <= extent - 1
    std::size_t hi_excl = 0;
    if (extent + pad > kpos) hi_excl = std::min(out_extent, (extent + pad - kpos - 1) / stride + 1);
    return {lo, std::max(lo, hi_excl)};
  }
};

}  // namespace

Var conv2d(Var x, Var w, std::size_t stride, std::size_t padding) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  FEDSAL_CHECK(stride >= 1, "conv2d: stride must be >= 1");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  FEDSAL_CHECK(ws[1] == xs[1], "conv2d: weight in-channels " + std::to_string(ws[1]) + " vs input channels " +
                                   std::to_string(xs[1]));
  FEDSAL_CHECK(ws[2] == ws[3], "conv2d: only square kernels are supported");
  FEDSAL_CHECK(xs[2] + 2 * padding >= ws[2] && xs[3] + 2 * padding >= ws[3], "conv2d: kernel larger than padded input");
  ConvGeometry geo{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, padding, 0, 0};
  geo.oh = (geo.h + 2 * padding - geo.k) / stride + 1;
  geo.ow = (geo.w + 2 * padding - geo.k) / stride + 1;

  const double* X = x.value().raw();
  const double* W = w.value().raw();
  Tensor out({geo.batch, geo.out_ch, geo.oh, geo.ow});
  double* Y = out.raw();
  for (std::size_t b = 0; b < geo.batch; ++b)
    for (std::size_t o = 0; o < geo.out_ch; ++o) {
      double* yplane = Y + (b * geo.out_ch + o) * geo.oh * geo.ow;
      for (std::size_t c = 0; c < geo.in_ch; ++c) {
        const double* xplane = X + (b * geo.in_ch + c) * geo.h * geo.w;
        for (std::size_t kh = 0; kh < geo.k; ++kh) {
          auto [oh_lo, oh_hi] = geo.valid_range(kh, geo.h, geo.oh);
          for (std::size_t kw = 0; kw < geo.k; ++kw) {
            const double wv = W[((o * geo.in_ch + c) * geo.k + kh) * geo.k + kw];
            auto [ow_lo, ow_hi] = geo.valid_range(kw, geo.w, geo.ow);
            for (std::size_t oy = oh_lo; oy < oh_hi; ++oy) {
              const double* xrow = xplane + (oy * stride + kh - padding) * geo.w;
              double* yrow = yplane + oy * geo.ow;
              for (std::size_t ox = ow_lo; ox < ow_hi; ++ox) yrow[ox] += wv * xrow[ox * stride + kw - padding];
            }
          }
        }
      }
    }

  const std::size_t xi = x.id(), wi = w.id();
  return x.tape()->record(Op::conv2d, std::move(out), {x, w}, [xi, wi, geo](Tape& tape, const Tensor& g) {
    const double* G = g.raw();
    const double* Xv = tape.value(xi).raw();
    const double* Wv = tape.value(wi).raw();
    const bool need_x = tape.requires_grad(xi);
    const bool need_w = tape.requires_grad(wi);
    std::span<double> gx, gw;
    if (need_x) gx = tape.grad_buffer(xi);
    if (need_w) gw = tape.grad_buffer(wi);
    const std::size_t s = geo.stride, p = geo.pad;
    for (std::size_t b = 0; b < geo.batch; ++b)
      for (std::size_t o = 0; o < geo.out_ch; ++o) {
        const double* gplane = G + (b * geo.out_ch + o) * geo.oh * geo.ow;
        for (std::size_t c = 0; c < geo.in_ch; ++c) {
          const std::size_t xoff = (b * geo.in_ch + c) * geo.h * geo.w;
          for (std::size_t kh = 0; kh < geo.k; ++kh) {
            auto [oh_lo, oh_hi] = geo.valid_range(kh, geo.h, geo.oh);
            for (std::size_t kw = 0; kw < geo.k; ++kw) {
              const std::size_t widx = ((o * geo.in_ch + c) * geo.k + kh) * geo.k + kw;
              auto [ow_lo, ow_hi] = geo.valid_range(kw, geo.w, geo.ow);
              double acc = 0.0;
              const double wv = Wv[widx];
              for (std::size_t oy = oh_lo; oy < oh_hi; ++oy) {
                const std::size_t xrow = xoff + (oy * s + kh - p) * geo.w;
                const double* grow = gplane + oy * geo.ow;
                for (std::size_t ox = ow_lo; ox < ow_hi; ++ox) {
                  const std::size_t xidx = xrow + ox * s + kw - p;
                  if (need_w) acc += grow[ox] * Xv[xidx];
                  if (need_x) gx[xidx] += grow[ox] * wv;
                }
              }
              if (need_w) gw[widx] += acc;
            }
          }
        }
      }
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(Op::add, std::move(out), {a, b}, [ai, bi](Tape& tape, const Tensor& g) {
    for (auto id : {ai, bi}) {
      if (!tape.requires_grad(id)) continue;
      auto gv = tape.grad_buffer(id);
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g[i];
    }
  });
}

Var add_bias(Var x, Var b) {
  require_rank(b, 1, "add_bias");
  const Shape& xs = x.shape();
  FEDSAL_CHECK(xs.size() == 2 || xs.size() == 4, "add_bias: input must be rank 2 or 4, got " + shape_str(xs));
  FEDSAL_CHECK(xs[1] == b.shape()[0], "add_bias: bias length " + std::to_string(b.shape()[0]) +
                                          " vs channels " + std::to_string(xs[1]));
  const std::size_t batch = xs[0], ch = xs[1];
  const std::size_t inner = xs.size() == 4 ? xs[2] * xs[3] : 1;
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  Tensor out(xs);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (n * ch + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) out[off + i] = xv[off + i] + bv[c];
    }
  const std::size_t xi = x.id(), bi = b.id();
  return x.tape()->record(Op::add_bias, std::move(out), {x, b},
                          [xi, bi, batch, ch, inner](Tape& tape, const Tensor& g) {
                            if (tape.requires_grad(xi)) {
                              auto gx = tape.grad_buffer(xi);
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                            }
                            if (tape.requires_grad(bi)) {
                              auto gb = tape.grad_buffer(bi);
                              for (std::size_t n = 0; n < batch; ++n)
                                for (std::size_t c = 0; c < ch; ++c) {
                                  const std::size_t off = (n * ch + c) * inner;
                                  double s = 0.0;
                                  for (std::size_t i = 0; i < inner; ++i) s += g[off + i];
                                  gb[c] += s;
                                }
                            }
                          });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(Op::sub, std::move(out), {a, b}, [ai, bi](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(ai)) {
      auto ga = tape.grad_buffer(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (tape.requires_grad(bi)) {
      auto gb = tape.grad_buffer(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(Op::mul, std::move(out), {a, b}, [ai, bi](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(ai)) {
      const Tensor& bv = tape.value(bi);
      auto ga = tape.grad_buffer(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tape.requires_grad(bi)) {
      const Tensor& av = tape.value(ai);
      auto gb = tape.grad_buffer(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(Op::scale, a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(Op::add_scalar, a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return unary(
      Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      Op::sigmoid, a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(Op::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary(Op::square, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  FEDSAL_CHECK(lo <= hi, "clamp: lo > hi");
  return unary(
      Op::clamp, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var minimum(Var a, Var b) {
  require_same_shape(a, b, "minimum");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::min(av[i], bv[i]);
  const std::size_t ai = a.id(), bi = b.id();
  // ties route the gradient to `a`
  return a.tape()->record(Op::minimum, std::move(out), {a, b}, [ai, bi](Tape& tape, const Tensor& g) {
    const Tensor& av = tape.value(ai);
    const Tensor& bv = tape.value(bi);
    const bool na = tape.requires_grad(ai), nb = tape.requires_grad(bi);
    std::span<double> ga, gb;
    if (na) ga = tape.grad_buffer(ai);
    if (nb) gb = tape.grad_buffer(bi);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (av[i] <= bv[i]) {
        if (na) ga[i] += g[i];
      } else if (nb) {
        gb[i] += g[i];
      }
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ai = a.id();
  return a.tape()->record(Op::sum, Tensor::scalar(s), {a}, [ai](Tape& tape, const Tensor& g) {
    auto ga = tape.grad_buffer(ai);
    for (auto& v : ga) v += g[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().numel());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ai = a.id();
  return a.tape()->record(Op::mean, Tensor::scalar(s / n), {a}, [ai, n](Tape& tape, const Tensor& g) {
    auto ga = tape.grad_buffer(ai);
    for (auto& v : ga) v += g[0] / n;
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ai = a.id();
  return a.tape()->record(Op::reshape, std::move(out), {a}, [ai](Tape& tape, const Tensor& g) {
    auto ga = tape.grad_buffer(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t batch = logits.shape()[0], k = logits.shape()[1];
  FEDSAL_CHECK(labels.size() == batch, "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                           std::to_string(batch) + " rows");
  const Tensor& z = logits.value();
  Tensor probs({batch, k});
  double loss = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const int y = labels[n];
    FEDSAL_CHECK(y >= 0 && static_cast<std::size_t>(y) < k, "softmax_cross_entropy: label out of range");
    const double* row = z.raw() + n * k;
    const double mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[n * k + j] = std::exp(row[j] - mx);
      denom += probs[n * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[n * k + j] /= denom;
    loss += -(row[y] - mx - std::log(denom));
  }
  loss /= static_cast<double>(batch);
  std::vector<int> ys(labels.begin(), labels.end());
  const std::size_t li = logits.id();
  return logits.tape()->record(
      Op::softmax_cross_entropy, Tensor::scalar(loss), {logits},
      [li, probs = std::move(probs), ys = std::move(ys), batch, k](Tape& tape, const Tensor& g) {
        auto gl = tape.grad_buffer(li);
        const double s = g[0] / static_cast<double>(batch);
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t j = 0; j < k; ++j) {
            const double onehot = (static_cast<std::size_t>(ys[n]) == j) ? 1.0 : 0.0;
            gl[n * k + j] += s * (probs[n * k + j] - onehot);
          }
      });
}

}  // namespace ag

ValueAndGrad value_and_grad(const LossFn& loss_fn, const ParamSet& params) {
  ag::Tape tape;
  std::vector<ag::Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.variable(p.value));
  ag::Var loss = loss_fn(tape, vars);
  FEDSAL_CHECK(loss.tape() == &tape, "loss function returned a value from another tape");
  FEDSAL_CHECK(loss.value().numel() == 1, "loss function must return a scalar, got " + shape_str(loss.shape()));
  ValueAndGrad out;
  out.value = loss.value().item();
  tape.backward(loss);
  for (std::size_t i = 0; i < params.size(); ++i) out.grad.add(params[i].name, tape.grad(vars[i]));
  return out;
}

ParamSet grad(const LossFn& loss_fn, const ParamSet& params) { return value_and_grad(loss_fn, params).grad; }

}  // namespace fedsal
