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

#include "fedsal/tensor.h"

namespace fedsal {

// p - lr * g, elementwise. Layouts must match; lr must be >= 0.
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamSet params;
  ParamSet m;
  ParamSet v;
  std::uint64_t step = 0;

  static AdamState init(ParamSet params);
};

// Bias-corrected Adam update. Throws NumericError on non-finite gradients.
AdamState adam_step(AdamState state, const ParamSet& grads, const AdamConfig& cfg);

}  // namespace fedsal
