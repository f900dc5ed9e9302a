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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsal/autograd.h"
#include "fedsal/tensor.h"

namespace fedsal {

enum class LayerKind : std::uint8_t { linear = 0, conv2d = 1, relu = 2, flatten = 3, residual_add = 4 };

std::string_view layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = false;
  // residual_add: node whose activation is added (0 = network input, i+1 = output of layer i).
  std::size_t skip_from = 0;

  static LayerSpec linear(std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                          std::size_t padding = 0, bool bias = true);
  static LayerSpec relu();
  static LayerSpec flatten();
  static LayerSpec residual_add(std::size_t skip_from);

  bool has_params() const { return kind == LayerKind::linear || kind == LayerKind::conv2d; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Ordered layer stack over per-sample inputs of `input_shape` (batch axis excluded).
// Node 0 is the input; node i+1 is the output of layer i.
struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;

  // Per-sample activation shape of every node. Throws ContractError on
  // incompatible adjacent extents.
  std::vector<Shape> node_shapes() const;
  Shape output_shape() const { return node_shapes().back(); }
  // Indices of linear/conv2d layers.
  std::vector<std::size_t> param_layers() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);

// Parameter layout implied by a spec: weight [out,in] or [out,in,k,k], bias [out].
ParamSet zero_params(const NetworkSpec& spec);

struct Network {
  NetworkSpec spec;
  ParamSet params;
};

// He-uniform weights, zero biases; deterministic per seed.
Network init_network(NetworkSpec spec, std::uint64_t seed);
void check_params(const NetworkSpec& spec, const ParamSet& params);

// Differentiable forward over a batch x of shape [B, input_shape...]. `params`
// are vars in ParamSet order.
ag::Var forward(ag::Tape& tape, const NetworkSpec& spec, std::span<const ag::Var> params, ag::Var x);
Tensor forward(const Network& net, const Tensor& x);

// e = E(w_e, x) and logits = P(w_p, e).
inline Tensor encoder_forward(const Network& enc, const Tensor& x) { return forward(enc, x); }
inline Tensor predictor_forward(const Network& pred, const Tensor& e) { return forward(pred, e); }

// Encoder/predictor pair. Parameter names are joined as "encoder.*" and "predictor.*".
struct Model {
  Network encoder;
  Network predictor;

  ParamSet joined_params() const;
  void set_joined_params(const ParamSet& joined);
  Tensor logits(const Tensor& x) const { return predictor_forward(predictor, encoder_forward(encoder, x)); }
};

inline constexpr std::string_view kEncoderPrefix = "encoder";
inline constexpr std::string_view kPredictorPrefix = "predictor";

}  // namespace fedsal
