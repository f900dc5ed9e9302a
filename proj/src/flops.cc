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

#include "fedsal/flops.h"

#include "fedsal/error.h"

namespace fedsal {

std::uint64_t count_flops(const NetworkSpec& spec, const Shape& input_shape) {
  NetworkSpec s = spec;
  s.input_shape = input_shape;
  const auto shapes = s.node_shapes();
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const LayerSpec& l = s.layers[i];
    const std::uint64_t out_elems = numel(shapes[i + 1]);
    switch (l.kind) {
      case LayerKind::linear:
        total += 2ULL * l.in * l.out + (l.bias ? out_elems : 0);
        break;
      case LayerKind::conv2d:
        total += 2ULL * l.in * l.kernel * l.kernel * out_elems + (l.bias ? out_elems : 0);
        break;
      case LayerKind::relu:
      case LayerKind::residual_add:
        total += out_elems;
        break;
      case LayerKind::flatten:
        break;
      default:
        throw ContractError("count_flops: unknown layer kind at layer " + std::to_string(i));
    }
  }
  return total;
}

std::uint64_t count_flops(const Model& model) {
  return count_flops(model.encoder.spec) + count_flops(model.predictor.spec);
}

}  // namespace fedsal
