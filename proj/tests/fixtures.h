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

#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "fedsal/autograd.h"
#include "fedsal/network.h"
#include "fedsal/protocol.h"

namespace fixture {

using namespace fedsal;

// Random conv/linear stack with relus, an optional residual block and a
// linear embedding at the end.
inline NetworkSpec random_stack(std::mt19937_64& rng, bool allow_conv = true) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  NetworkSpec spec;
  const bool conv = allow_conv && pick(0, 1) == 1;
  if (conv) {
    std::size_t c = pick(1, 3), h = pick(4, 7), w = h;
    spec.input_shape = {c, h, w};
    const std::size_t n_conv = pick(1, 3);
    for (std::size_t i = 0; i < n_conv; ++i) {
      const std::size_t k = pick(1, 3) | 1;  // 1 or 3
      const std::size_t s = h > 4 && pick(0, 1) ? 2 : 1;
      const std::size_t p = k / 2;
      const std::size_t out = pick(1, 4);
      spec.layers.push_back(LayerSpec::conv2d(c, out, k, s, p, pick(0, 3) != 0));
      h = (h + 2 * p - k) / s + 1;
      c = out;
      spec.layers.push_back(LayerSpec::relu());
      if (pick(0, 2) == 0) {  // same-shape residual block
        const std::size_t skip = spec.layers.size();
        spec.layers.push_back(LayerSpec::conv2d(c, c, 3, 1, 1));
        spec.layers.push_back(LayerSpec::residual_add(skip));
        spec.layers.push_back(LayerSpec::relu());
      }
    }
    spec.layers.push_back(LayerSpec::flatten());
    spec.layers.push_back(LayerSpec::linear(c * h * h, pick(2, 4), pick(0, 3) != 0));
  } else {
    std::size_t d = pick(2, 6);
    spec.input_shape = {d};
    const std::size_t n_hidden = pick(1, 3);
    for (std::size_t i = 0; i < n_hidden; ++i) {
      const std::size_t out = pick(2, 6);
      spec.layers.push_back(LayerSpec::linear(d, out, pick(0, 3) != 0));
      spec.layers.push_back(LayerSpec::relu());
      d = out;
    }
    spec.layers.push_back(LayerSpec::linear(d, pick(2, 4)));
  }
  return spec;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(shape);
  for (auto& x : t.data()) x = n(rng);
  return t;
}

inline Shape batched(std::size_t b, const Shape& s) {
  Shape out{b};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

// Randomizes biases too so that forward checks are not blind to them.
inline Network random_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network net = init_network(spec, seed);
  std::mt19937_64 rng(seed ^ 0x5eed);
  for (auto& p : net.params) p.value = random_tensor(p.value.shape(), rng, 0.5);
  return net;
}

// Client loss 0.5 * |theta - target|^2 summed over every named tensor.
class QuadraticObjective final : public LocalObjective {
 public:
  explicit QuadraticObjective(ParamSet target) : target_(std::move(target)) {}
  explicit QuadraticObjective(double target) : target_(scalar_model(target)) {}
  std::size_t train_size() const override { return 1; }
  ValueAndGrad loss_and_grad(const ParamSet& model, std::span<const std::size_t>) const override {
    ValueAndGrad vg;
    vg.grad = model.zeros_like();
    for (std::size_t t = 0; t < model.size(); ++t) {
      const Tensor& w = model[t].value;
      const Tensor& b = target_.at(model[t].name);
      Tensor& g = vg.grad[t].value;
      for (std::size_t i = 0; i < w.numel(); ++i) {
        g[i] = w[i] - b[i];
        vg.value += 0.5 * g[i] * g[i];
      }
    }
    return vg;
  }
  double accuracy(const ParamSet& model) const override {
    double d = 0.0;
    for (const auto& p : model)
      for (std::size_t i = 0; i < p.value.numel(); ++i) d += std::abs(p.value[i] - target_.at(p.name)[i]);
    return std::exp(-d);
  }
  static ParamSet scalar_model(double w, std::string name = "encoder.w") {
    ParamSet p;
    p.add(std::move(name), Tensor(Shape{1}, std::vector<double>{w}));
    return p;
  }

 private:
  ParamSet target_;
};

inline ParamSet scalar_model(double w) { return QuadraticObjective::scalar_model(w); }

}  // namespace fixture
