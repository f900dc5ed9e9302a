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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fedsal/network.h"

namespace fedsal {

// Binary checkpoint, little-endian throughout:
//
//   magic      8 bytes  "FEDSALCK"
//   version    u32      1
//   input      u32 rank, then rank x u64 extents
//   layers     u32 count, then per layer:
//                u8 kind, u64 in, u64 out, u64 kernel, u64 stride, u64 padding,
//                u8 bias, u64 skip_from
//   meta       u32 count, then per entry: u32 key length, key bytes, f64 value
//   tensors    u32 count, then per tensor:
//                u32 name length, name bytes, u32 rank, rank x u64 extents,
//                numel x f64 values
//
// Networks store their spec in the layer table; other parameter sets (the
// policy network) store an empty layer table and describe themselves in meta.
struct Checkpoint {
  NetworkSpec spec;
  std::vector<std::pair<std::string, double>> meta;
  ParamSet params;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

}  // namespace fedsal
