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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsal/network.h"
#include "fedsal/tensor.h"

namespace fedsal {

// Parametric layers whose output channels must be masked together. Layers
// joined by a residual add share one group. The group feeding the embedding
// (the last parametric layer) and any group tied to the raw input are never
// maskable, so the embedding extent is preserved.
struct MaskGroup {
  std::vector<std::size_t> layers;
  std::size_t channels = 0;
};

std::vector<MaskGroup> mask_groups(const NetworkSpec& spec);

struct GroupSelection {
  double ratio = 0.0;                 // fraction pruned; 0 keeps everything
  std::vector<std::uint32_t> kept;    // strictly increasing channel indices

  friend bool operator==(const GroupSelection&, const GroupSelection&) = default;
};

// One entry per mask group, in mask_groups() order.
struct SalientSelection {
  std::vector<GroupSelection> groups;

  friend bool operator==(const SalientSelection&, const SalientSelection&) = default;
};

// max(1, round((1 - ratio) * channels)).
std::size_t kept_count(std::size_t channels, double ratio);

// Keeps the top channels by L2 norm of their weight slices (summed over the
// group's layers), ties to the lower index; result sorted ascending.
SalientSelection select_salient(const Network& enc, std::span<const double> ratios);
SalientSelection full_selection(const NetworkSpec& spec);

// Throws ContractError unless `sel` is consistent with `spec`.
void validate_selection(const NetworkSpec& spec, const SalientSelection& sel);

// Kept output rows of every layer (indexed by layer); nullopt means all rows.
std::vector<std::optional<std::vector<std::uint32_t>>> layer_rows(const NetworkSpec& spec,
                                                                  const SalientSelection& sel);

// Sub-network holding only kept output channels of each masked layer and the
// matching input channels of the layer that consumes them.
Network apply_selection(const Network& enc, const SalientSelection& sel);

bool prunes_anything(const SalientSelection& sel, const NetworkSpec& spec);
std::vector<double> ratios(const SalientSelection& sel);

// Row-subset of one tensor as it travels on the wire. Biases share their
// weight's index list, so only the weight slice carries it.
struct RowSlice {
  std::string name;
  std::vector<std::uint32_t> rows;
  bool full_rows = true;
  bool carries_index = false;
  Tensor values;  // first axis has rows.size() entries
};

struct SlicedParams {
  std::vector<RowSlice> slices;

  bool empty() const { return slices.empty(); }
  std::size_t numel() const;
  // Scatters the rows back into a copy of `base`.
  ParamSet scatter_into(const ParamSet& base) const;
};

// Every tensor with all rows.
SlicedParams full_slices(const ParamSet& params);

// Rows of the encoder parameters chosen by `sel`. Names get "<prefix>." when
// prefix is non-empty; `params` uses the unprefixed layer names.
SlicedParams slice_encoder(const ParamSet& params, const NetworkSpec& spec, const SalientSelection& sel,
                           std::string_view prefix = {});

// Same rows as `pattern`, values taken from `source` (looked up by name).
SlicedParams restrict_like(const ParamSet& source, const SlicedParams& pattern);

// Wire size of a dense set: numel * bits / 8.
std::size_t param_bytes(const ParamSet& ps, int wire_bits);
// Wire size of a sliced set: values plus 32-bit indices for each partial slice
// that carries an index list.
std::size_t param_bytes(const SlicedParams& sp, int wire_bits);

}  // namespace fedsal
