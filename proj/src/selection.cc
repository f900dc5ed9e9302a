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

#include "fedsal/selection.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fedsal/error.h"

namespace fedsal {
namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void join(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Which parametric layer defines the channel axis of each node, and how many
// consecutive features one channel spans (H*W after a flatten).
struct ChannelFlow {
  // id 0 is the network input; id i+1 is layer i.
  std::vector<std::size_t> node_source;
  std::vector<std::size_t> node_block;
  UnionFind uf;
  std::vector<MaskGroup> groups;
  std::vector<int> layer_group;  // -1 when the layer is not maskable
};

ChannelFlow analyze(const NetworkSpec& spec) {
  const auto shapes = spec.node_shapes();
  const std::size_t n_layers = spec.layers.size();
  ChannelFlow f{{0}, {1}, UnionFind(n_layers + 2), {}, std::vector<int>(n_layers, -1)};
  const std::size_t poison = n_layers + 1;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::size_t src = f.node_source.back();
    const std::size_t blk = f.node_block.back();
    switch (l.kind) {
      case LayerKind::linear:
      case LayerKind::conv2d:
        f.node_source.push_back(i + 1);
        f.node_block.push_back(1);
        break;
      case LayerKind::relu:
        f.node_source.push_back(src);
        f.node_block.push_back(blk);
        break;
      case LayerKind::flatten:
        f.node_source.push_back(src);
        f.node_block.push_back(shapes[i].size() == 3 ? blk * shapes[i][1] * shapes[i][2] : blk);
        break;
      case LayerKind::residual_add: {
        const std::size_t other = f.node_source[l.skip_from];
        f.uf.join(src, other);
        if (f.node_block[l.skip_from] != blk) f.uf.join(src, poison);
        f.node_source.push_back(src);
        f.node_block.push_back(blk);
        break;
      }
    }
  }
  const auto params = spec.param_layers();
  if (!params.empty()) f.uf.join(params.back() + 1, poison);
  f.uf.join(0, poison);

  std::map<std::size_t, std::size_t> root_to_group;
  for (std::size_t li : params) {
    const std::size_t root = f.uf.find(li + 1);
    if (root == f.uf.find(poison)) continue;
    auto [it, inserted] = root_to_group.try_emplace(root, f.groups.size());
    if (inserted) f.groups.push_back({{}, spec.layers[li].out});
    f.groups[it->second].layers.push_back(li);
    f.layer_group[li] = static_cast<int>(it->second);
  }
  return f;
}

std::vector<std::uint32_t> iota_u32(std::size_t n) {
  std::vector<std::uint32_t> v(n);
  std::iota(v.begin(), v.end(), 0u);
  return v;
}

}  // namespace

std::vector<MaskGroup> mask_groups(const NetworkSpec& spec) { return analyze(spec).groups; }

std::size_t kept_count(std::size_t channels, double ratio) {
  FEDSAL_CHECK(ratio >= 0.0 && ratio <= 1.0, "sparsity ratio must lie in [0,1]");
  const auto k = static_cast<std::size_t>(std::llround((1.0 - ratio) * static_cast<double>(channels)));
  return std::clamp<std::size_t>(k, 1, channels);
}

SalientSelection select_salient(const Network& enc, std::span<const double> ratios) {
  const auto groups = mask_groups(enc.spec);
  FEDSAL_CHECK(ratios.size() == groups.size(), "select_salient: " + std::to_string(ratios.size()) +
                                                   " ratios for " + std::to_string(groups.size()) + " maskable groups");
  SalientSelection sel;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const MaskGroup& grp = groups[g];
    std::vector<double> norm2(grp.channels, 0.0);
    for (std::size_t li : grp.layers) {
      const Tensor& w = enc.params.at(weight_name(li));
      const std::size_t row = w.numel() / w.dim(0);
      for (std::size_t c = 0; c < grp.channels; ++c)
        for (std::size_t j = 0; j < row; ++j) norm2[c] += w[c * row + j] * w[c * row + j];
    }
    const std::size_t keep = kept_count(grp.channels, ratios[g]);
    std::vector<std::uint32_t> order = iota_u32(grp.channels);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return norm2[a] > norm2[b]; });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    sel.groups.push_back({ratios[g], std::move(order)});
  }
  return sel;
}

SalientSelection full_selection(const NetworkSpec& spec) {
  SalientSelection sel;
  for (const auto& g : mask_groups(spec)) sel.groups.push_back({0.0, iota_u32(g.channels)});
  return sel;
}

void validate_selection(const NetworkSpec& spec, const SalientSelection& sel) {
  const auto groups = mask_groups(spec);
  FEDSAL_CHECK(sel.groups.size() == groups.size(), "selection has " + std::to_string(sel.groups.size()) +
                                                       " groups, network has " + std::to_string(groups.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& kept = sel.groups[g].kept;
    FEDSAL_CHECK(!kept.empty(), "selection group " + std::to_string(g) + " keeps no channel");
    FEDSAL_CHECK(kept.size() == kept_count(groups[g].channels, sel.groups[g].ratio),
                 "selection group " + std::to_string(g) + " size disagrees with its sparsity ratio");
    for (std::size_t i = 0; i < kept.size(); ++i) {
      FEDSAL_CHECK(kept[i] < groups[g].channels, "selection index " + std::to_string(kept[i]) + " out of range");
      FEDSAL_CHECK(i == 0 || kept[i] > kept[i - 1], "selection indices must be strictly increasing");
    }
  }
}

std::vector<std::optional<std::vector<std::uint32_t>>> layer_rows(const NetworkSpec& spec,
                                                                  const SalientSelection& sel) {
  validate_selection(spec, sel);
  const ChannelFlow f = analyze(spec);
  std::vector<std::optional<std::vector<std::uint32_t>>> rows(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (f.layer_group[i] >= 0) rows[i] = sel.groups[static_cast<std::size_t>(f.layer_group[i])].kept;
  return rows;
}

Network apply_selection(const Network& enc, const SalientSelection& sel) {
  validate_selection(enc.spec, sel);
  ChannelFlow f = analyze(enc.spec);
  const auto rows = layer_rows(enc.spec, sel);

  Network sub;
  sub.spec = enc.spec;
  for (std::size_t i = 0; i < enc.spec.layers.size(); ++i) {
    const LayerSpec& l = enc.spec.layers[i];
    if (!l.has_params()) continue;
    LayerSpec& nl = sub.spec.layers[i];

    // Input columns follow the channel mask of whichever layer feeds this one.
    std::optional<std::vector<std::uint32_t>> cols;
    const std::size_t src = f.node_source[i];
    if (src > 0 && rows[src - 1]) {
      const std::size_t blk = f.node_block[i];
      std::vector<std::uint32_t> c;
      for (auto ch : *rows[src - 1])
        for (std::size_t j = 0; j < blk; ++j) c.push_back(static_cast<std::uint32_t>(ch * blk + j));
      cols = std::move(c);
    }

    Tensor w = enc.params.at(weight_name(i));
    if (rows[i]) w = gather(w, 0, *rows[i]);
    if (cols) w = gather(w, 1, *cols);
    nl.out = w.dim(0);
    nl.in = w.dim(1);
    sub.params.add(weight_name(i), std::move(w));
    if (l.bias) {
      Tensor b = enc.params.at(bias_name(i));
      if (rows[i]) b = gather(b, 0, *rows[i]);
      sub.params.add(bias_name(i), std::move(b));
    }
  }
  check_params(sub.spec, sub.params);
  return sub;
}

bool prunes_anything(const SalientSelection& sel, const NetworkSpec& spec) {
  const auto groups = mask_groups(spec);
  for (std::size_t g = 0; g < sel.groups.size() && g < groups.size(); ++g)
    if (sel.groups[g].kept.size() < groups[g].channels) return true;
  return false;
}

std::vector<double> ratios(const SalientSelection& sel) {
  std::vector<double> r;
  for (const auto& g : sel.groups) r.push_back(g.ratio);
  return r;
}

std::size_t SlicedParams::numel() const {
  std::size_t n = 0;
  for (const auto& s : slices) n += s.values.numel();
  return n;
}

ParamSet SlicedParams::scatter_into(const ParamSet& base) const {
  ParamSet out = base;
  for (const auto& s : slices) {
    Tensor& dst = out.at(s.name);
    const std::size_t n_rows = dst.rank() == 0 ? 1 : dst.dim(0);
    const std::size_t row = dst.numel() / n_rows;
    FEDSAL_CHECK(s.values.numel() == s.rows.size() * row, "slice '" + s.name + "' has inconsistent extent");
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
      FEDSAL_CHECK(s.rows[r] < n_rows, "slice '" + s.name + "' row out of range");
      std::copy_n(s.values.raw() + r * row, row, dst.raw() + s.rows[r] * row);
    }
  }
  return out;
}

SlicedParams full_slices(const ParamSet& params) {
  SlicedParams out;
  for (const auto& p : params) {
    const std::size_t n = p.value.rank() == 0 ? 1 : p.value.dim(0);
    out.slices.push_back({p.name, iota_u32(n), true, false, p.value});
  }
  return out;
}

SlicedParams slice_encoder(const ParamSet& params, const NetworkSpec& spec, const SalientSelection& sel,
                           std::string_view prefix) {
  check_params(spec, params);
  const auto rows = layer_rows(spec, sel);
  const std::string head = prefix.empty() ? std::string() : std::string(prefix) + ".";
  SlicedParams out;
  for (std::size_t i : spec.param_layers()) {
    const LayerSpec& l = spec.layers[i];
    const bool partial = rows[i].has_value() && rows[i]->size() < l.out;
    const std::vector<std::uint32_t> r = rows[i] ? *rows[i] : iota_u32(l.out);
    const Tensor& w = params.at(weight_name(i));
    out.slices.push_back({head + weight_name(i), r, !partial, partial, partial ? gather(w, 0, r) : w});
    if (l.bias) {
      const Tensor& b = params.at(bias_name(i));
      out.slices.push_back({head + bias_name(i), r, !partial, false, partial ? gather(b, 0, r) : b});
    }
  }
  return out;
}

SlicedParams restrict_like(const ParamSet& source, const SlicedParams& pattern) {
  SlicedParams out;
  for (const auto& s : pattern.slices) {
    const Tensor& t = source.at(s.name);
    out.slices.push_back({s.name, s.rows, s.full_rows, s.carries_index, s.full_rows ? t : gather(t, 0, s.rows)});
  }
  return out;
}

std::size_t param_bytes(const ParamSet& ps, int wire_bits) {
  FEDSAL_CHECK(wire_bits == 32 || wire_bits == 64, "wire precision must be 32 or 64 bits");
  return ps.numel() * static_cast<std::size_t>(wire_bits / 8);
}

std::size_t param_bytes(const SlicedParams& sp, int wire_bits) {
  FEDSAL_CHECK(wire_bits == 32 || wire_bits == 64, "wire precision must be 32 or 64 bits");
  std::size_t bytes = 0;
  for (const auto& s : sp.slices) {
    bytes += s.values.numel() * static_cast<std::size_t>(wire_bits / 8);
    if (s.carries_index && !s.full_rows) bytes += s.rows.size() * sizeof(std::uint32_t);
  }
  return bytes;
}

}  // namespace fedsal
