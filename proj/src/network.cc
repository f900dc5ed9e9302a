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

#include "fedsal/network.h"

#include <cmath>
#include <random>

#include "fedsal/error.h"

namespace fedsal {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::linear: return "linear";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::residual_add: return "residual_add";
  }
  return "unknown";
}

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::linear;
  l.in = in;
  l.out = out;
  l.bias = bias;
  return l;
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::conv2d;
  l.in = in;
  l.out = out;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.bias = bias;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  return l;
}

LayerSpec LayerSpec::residual_add(std::size_t skip_from) {
  LayerSpec l;
  l.kind = LayerKind::residual_add;
  l.skip_from = skip_from;
  return l;
}

std::vector<Shape> NetworkSpec::node_shapes() const {
  FEDSAL_CHECK(!input_shape.empty(), "network input shape is empty");
  for (auto d : input_shape) FEDSAL_CHECK(d > 0, "network input extents must be positive");
  std::vector<Shape> shapes{input_shape};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const Shape& cur = shapes.back();
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(l.kind)) + "): ";
    switch (l.kind) {
      case LayerKind::linear:
        FEDSAL_CHECK(cur.size() == 1, where + "expects a flat input, got " + shape_str(cur));
        FEDSAL_CHECK(l.in == cur[0], where + "in=" + std::to_string(l.in) + " but input has " + std::to_string(cur[0]));
        FEDSAL_CHECK(l.out > 0, where + "out must be positive");
        shapes.push_back({l.out});
        break;
      case LayerKind::conv2d: {
        FEDSAL_CHECK(cur.size() == 3, where + "expects [C,H,W] input, got " + shape_str(cur));
        FEDSAL_CHECK(l.in == cur[0], where + "in=" + std::to_string(l.in) + " but input has " +
                                         std::to_string(cur[0]) + " channels");
        FEDSAL_CHECK(l.out > 0 && l.kernel > 0 && l.stride > 0, where + "extents must be positive");
        FEDSAL_CHECK(cur[1] + 2 * l.padding >= l.kernel && cur[2] + 2 * l.padding >= l.kernel,
                     where + "kernel larger than padded input");
        const std::size_t oh = (cur[1] + 2 * l.padding - l.kernel) / l.stride + 1;
        const std::size_t ow = (cur[2] + 2 * l.padding - l.kernel) / l.stride + 1;
        shapes.push_back({l.out, oh, ow});
        break;
      }
      case LayerKind::relu:
        shapes.push_back(cur);
        break;
      case LayerKind::flatten:
        shapes.push_back({numel(cur)});
        break;
      case LayerKind::residual_add:
        FEDSAL_CHECK(l.skip_from <= i, where + "skip source must be an earlier node");
        FEDSAL_CHECK(shapes[l.skip_from] == cur, where + "skip shape " + shape_str(shapes[l.skip_from]) +
                                                     " differs from " + shape_str(cur));
        shapes.push_back(cur);
        break;
      default:
        throw ContractError(where + "unknown layer kind");
    }
  }
  return shapes;
}

std::vector<std::size_t> NetworkSpec::param_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].has_params()) out.push_back(i);
  return out;
}

std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

ParamSet zero_params(const NetworkSpec& spec) {
  spec.node_shapes();
  ParamSet ps;
  for (std::size_t i : spec.param_layers()) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::linear)
      ps.add(weight_name(i), Tensor({l.out, l.in}));
    else
      ps.add(weight_name(i), Tensor({l.out, l.in, l.kernel, l.kernel}));
    if (l.bias) ps.add(bias_name(i), Tensor({l.out}));
  }
  return ps;
}

Network init_network(NetworkSpec spec, std::uint64_t seed) {
  Network net{spec, zero_params(spec)};
  std::mt19937_64 rng(seed);
  for (auto& p : net.params) {
    if (p.name.ends_with(".bias")) continue;
    const Shape& s = p.value.shape();
    const std::size_t fan_in = numel(s) / s[0];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.value.data()) v = dist(rng);
  }
  return net;
}

void check_params(const NetworkSpec& spec, const ParamSet& params) {
  FEDSAL_CHECK(zero_params(spec).same_layout(params), "parameters do not match the network layout");
}

ag::Var forward(ag::Tape& tape, const NetworkSpec& spec, std::span<const ag::Var> params, ag::Var x) {
  FEDSAL_CHECK(x.tape() == &tape, "network input was recorded on another tape");
  const std::vector<Shape> shapes = spec.node_shapes();
  {
    const Shape& xs = x.shape();
    FEDSAL_CHECK(xs.size() == spec.input_shape.size() + 1 &&
                     std::equal(spec.input_shape.begin(), spec.input_shape.end(), xs.begin() + 1),
                 "input batch " + shape_str(xs) + " does not match network input " + shape_str(spec.input_shape));
  }
  const std::size_t batch = x.shape()[0];
  std::vector<ag::Var> nodes{x};
  std::size_t pi = 0;
  auto next_param = [&]() {
    FEDSAL_CHECK(pi < params.size(), "too few parameter vars for network");
    return params[pi++];
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    ag::Var cur = nodes.back();
    ag::Var y;
    switch (l.kind) {
      case LayerKind::linear: {
        ag::Var w = next_param();
        y = ag::matmul(cur, ag::transpose(w));
        if (l.bias) y = ag::add_bias(y, next_param());
        break;
      }
      case LayerKind::conv2d: {
        ag::Var w = next_param();
        y = ag::conv2d(cur, w, l.stride, l.padding);
        if (l.bias) y = ag::add_bias(y, next_param());
        break;
      }
      case LayerKind::relu:
        y = ag::relu(cur);
        break;
      case LayerKind::flatten:
        y = ag::reshape(cur, {batch, numel(shapes[i])});
        break;
      case LayerKind::residual_add:
        y = ag::add(cur, nodes[l.skip_from]);
        break;
    }
    nodes.push_back(y);
  }
  FEDSAL_CHECK(pi == params.size(), "too many parameter vars for network");
  return nodes.back();
}

Tensor forward(const Network& net, const Tensor& x) {
  ag::Tape tape;
  std::vector<ag::Var> vars;
  for (const auto& p : net.params) vars.push_back(tape.constant(p.value));
  return forward(tape, net.spec, vars, tape.constant(x)).value();
}

ParamSet Model::joined_params() const {
  return concat(prefixed(encoder.params, kEncoderPrefix), prefixed(predictor.params, kPredictorPrefix));
}

void Model::set_joined_params(const ParamSet& joined) {
  ParamSet enc = unprefixed(joined, kEncoderPrefix);
  ParamSet pred = unprefixed(joined, kPredictorPrefix);
  check_params(encoder.spec, enc);
  check_params(predictor.spec, pred);
  encoder.params = std::move(enc);
  predictor.params = std::move(pred);
}

}  // namespace fedsal
