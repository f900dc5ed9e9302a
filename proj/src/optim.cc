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

#include "fedsal/optim.h"

#include <cmath>

#include "fedsal/error.h"

namespace fedsal {

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr) {
  FEDSAL_CHECK(params.same_layout(grads), "sgd_step: gradient layout does not match parameters");
  FEDSAL_CHECK(lr >= 0.0 && std::isfinite(lr), "sgd_step: learning rate must be finite and non-negative");
  return axpy(params, -lr, grads);
}

AdamState AdamState::init(ParamSet params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.params = std::move(params);
  return s;
}

AdamState adam_step(AdamState state, const ParamSet& grads, const AdamConfig& cfg) {
  FEDSAL_CHECK(state.params.same_layout(grads), "adam_step: gradient layout does not match parameters");
  FEDSAL_CHECK(state.m.same_layout(grads) && state.v.same_layout(grads), "adam_step: moment buffers do not match");
  FEDSAL_CHECK(cfg.lr >= 0.0 && cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0 &&
                   cfg.eps > 0.0,
               "adam_step: invalid hyperparameters");
  for (const auto& g : grads)
    if (!g.value.all_finite()) throw NumericError("adam_step: non-finite gradient for '" + g.name + "'");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto p = state.params[i].value.data();
    auto m = state.m[i].value.data();
    auto v = state.v[i].value.data();
    auto g = grads[i].value.data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  return state;
}

}  // namespace fedsal
