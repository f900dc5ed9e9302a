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

#include "fedsal/network.h"

namespace fedsal {

// Per-sample floating point operations. A multiply-accumulate counts 2, a bias
// add 1 per output element, relu and residual add 1 per element; flatten is free.
// Padded kernel taps are counted like any other tap.
std::uint64_t count_flops(const NetworkSpec& spec, const Shape& input_shape);
inline std::uint64_t count_flops(const NetworkSpec& spec) { return count_flops(spec, spec.input_shape); }
inline std::uint64_t count_flops(const Network& net) { return count_flops(net.spec); }
std::uint64_t count_flops(const Model& model);

}  // namespace fedsal
