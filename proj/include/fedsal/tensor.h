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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedsal {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. A rank-0 tensor is a scalar.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;
  bool all_finite() const;

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Copies the given indices along `axis` (in the order given).
Tensor gather(const Tensor& t, std::size_t axis, std::span<const std::uint32_t> indices);

struct Param {
  std::string name;
  Tensor value;

  friend bool operator==(const Param&, const Param&) = default;
};

// Ordered collection of named tensors: the unit of communication between
// clients and the server.
class ParamSet {
 public:
  ParamSet() = default;

  void add(std::string name, Tensor value);

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  // Total scalar count.
  std::size_t numel() const;
  // Same names, same shapes, in the same order.
  bool same_layout(const ParamSet& other) const;
  ParamSet zeros_like() const;

  // Subset of entries whose name starts with `prefix`.
  ParamSet with_prefix(std::string_view prefix) const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<Param> params_;
};

// out = a + alpha * b, layouts must match.
ParamSet axpy(const ParamSet& a, double alpha, const ParamSet& b);
double max_abs_diff(const ParamSet& a, const ParamSet& b);
// FNV-1a over names, shapes and raw value bits; used to assert frozen weights.
std::uint64_t fingerprint(const ParamSet& ps);

// Concatenates `a` and `b`, prefixing names with "<prefix>.".
ParamSet prefixed(const ParamSet& ps, std::string_view prefix);
// Inverse of prefixed(): keeps entries under "<prefix>." and strips it.
ParamSet unprefixed(const ParamSet& ps, std::string_view prefix);
ParamSet concat(const ParamSet& a, const ParamSet& b);

}  // namespace fedsal
