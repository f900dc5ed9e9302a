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

#pragma once

#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedsal/tensor.h"

namespace fedsal {
namespace ag {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class Op {
  leaf,
  matmul,
  transpose,
  conv2d,
  add,
  add_bias,
  sub,
  mul,
  scale,
  add_scalar,
  relu,
  sigmoid,
  exp,
  square,
  clamp,
  minimum,
  sum,
  mean,
  reshape,
  softmax_cross_entropy,
};

std::string_view op_name(Op op);

// Records primitive applications in evaluation order, which is a topological
// order of the computation; backward() walks it in reverse.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Var variable(Tensor value);
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  Op op(Var v) const { return nodes_.at(v.id()).op; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar. Gradients of earlier sweeps are discarded.
  void backward(Var loss);
  // d(loss)/d(v) for the last backward(); zeros when v did not contribute.
  Tensor grad(Var v) const;

  // Primitive plumbing. Throws NumericError if `value` has non-finite entries.
  Var record(Op op, Tensor value, std::initializer_list<Var> inputs, Backward backward);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::span<double> grad_buffer(std::size_t id);

 private:
  struct Node {
    Op op;
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad;
    std::vector<std::size_t> inputs;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---- primitives -------------------------------------------------------------

Var matmul(Var a, Var b);  // [m,k] x [k,n]
Var transpose(Var a);      // rank-2 only
// x [B,C,H,W], w [O,C,K,K]; no dilation or groups.
Var conv2d(Var x, Var w, std::size_t stride, std::size_t padding);
Var add(Var a, Var b);
// b [C] broadcast over x [B,C] or x [B,C,H,W].
Var add_bias(Var x, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);
Var minimum(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);
// Mean over rows of -log softmax(logits)[label]; logits [B,K].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ag

using LossFn = std::function<ag::Var(ag::Tape&, std::span<const ag::Var> params)>;

struct ValueAndGrad {
  double value = 0.0;
  ParamSet grad;
};

// Evaluates loss_fn with every tensor of `params` as a differentiable leaf and
// returns one gradient per tensor. `params` is not modified.
ValueAndGrad value_and_grad(const LossFn& loss_fn, const ParamSet& params);
ParamSet grad(const LossFn& loss_fn, const ParamSet& params);

}  // namespace fedsal
