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

#include "fedsal/tensor.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "fedsal/error.h"

namespace fedsal {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) FEDSAL_CHECK(d > 0, "tensor extents must be positive: " + shape_str(shape_));
  data_.assign(fedsal::numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) FEDSAL_CHECK(d > 0, "tensor extents must be positive: " + shape_str(shape_));
  FEDSAL_CHECK(data_.size() == fedsal::numel(shape_),
               "data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

double Tensor::item() const {
  FEDSAL_CHECK(data_.size() == 1, "item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  FEDSAL_CHECK(fedsal::numel(shape) == numel(), "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

Tensor gather(const Tensor& t, std::size_t axis, std::span<const std::uint32_t> indices) {
  FEDSAL_CHECK(axis < t.rank(), "gather axis out of range");
  FEDSAL_CHECK(!indices.empty(), "gather needs at least one index");
  const std::size_t extent = t.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= t.dim(i);
  for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.dim(i);
  Shape shape = t.shape();
  shape[axis] = indices.size();
  Tensor out(shape);
  double* dst = out.raw();
  for (std::size_t o = 0; o < outer; ++o) {
    for (auto idx : indices) {
      FEDSAL_CHECK(idx < extent, "gather index " + std::to_string(idx) + " out of range " + std::to_string(extent));
      const double* src = t.raw() + (o * extent + idx) * inner;
      dst = std::copy(src, src + inner, dst);
    }
  }
  return out;
}

void ParamSet::add(std::string name, Tensor value) {
  FEDSAL_CHECK(!contains(name), "duplicate parameter name '" + name + "'");
  params_.push_back({std::move(name), std::move(value)});
}

std::optional<std::size_t> ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

const Tensor& ParamSet::at(std::string_view name) const {
  auto i = index_of(name);
  FEDSAL_CHECK(i.has_value(), "no parameter named '" + std::string(name) + "'");
  return params_[*i].value;
}

Tensor& ParamSet::at(std::string_view name) {
  auto i = index_of(name);
  FEDSAL_CHECK(i.has_value(), "no parameter named '" + std::string(name) + "'");
  return params_[*i].value;
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (params_[i].name != other.params_[i].name) return false;
    if (params_[i].value.shape() != other.params_[i].value.shape()) return false;
  }
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& p : params_) out.add(p.name, Tensor(p.value.shape()));
  return out;
}

ParamSet ParamSet::with_prefix(std::string_view prefix) const {
  ParamSet out;
  for (const auto& p : params_)
    if (p.name.starts_with(prefix)) out.add(p.name, p.value);
  return out;
}

ParamSet axpy(const ParamSet& a, double alpha, const ParamSet& b) {
  FEDSAL_CHECK(a.same_layout(b), "axpy: parameter layouts differ");
  ParamSet out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out[i].value.data();
    auto src = b[i].value.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += alpha * src[j];
  }
  return out;
}

double max_abs_diff(const ParamSet& a, const ParamSet& b) {
  FEDSAL_CHECK(a.same_layout(b), "max_abs_diff: parameter layouts differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto x = a[i].value.data();
    auto y = b[i].value.data();
    for (std::size_t j = 0; j < x.size(); ++j) m = std::max(m, std::abs(x[j] - y[j]));
  }
  return m;
}

namespace {
constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= kFnvPrime;
  }
}
}  // namespace

std::uint64_t fingerprint(const ParamSet& ps) {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : ps) {
    fnv_bytes(h, p.name.data(), p.name.size());
    for (auto d : p.value.shape()) {
      std::uint64_t d64 = d;
      fnv_bytes(h, &d64, sizeof d64);
    }
    for (double v : p.value.data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      fnv_bytes(h, &bits, sizeof bits);
    }
  }
  return h;
}

ParamSet prefixed(const ParamSet& ps, std::string_view prefix) {
  ParamSet out;
  for (const auto& p : ps) out.add(std::string(prefix) + "." + p.name, p.value);
  return out;
}

ParamSet unprefixed(const ParamSet& ps, std::string_view prefix) {
  const std::string head = std::string(prefix) + ".";
  ParamSet out;
  for (const auto& p : ps)
    if (p.name.starts_with(head)) out.add(p.name.substr(head.size()), p.value);
  return out;
}

ParamSet concat(const ParamSet& a, const ParamSet& b) {
  ParamSet out = a;
  for (const auto& p : b) out.add(p.name, p.value);
  return out;
}

}  // namespace fedsal
