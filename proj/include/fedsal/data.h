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
#include <filesystem>
#include <span>
#include <vector>

#include "fedsal/tensor.h"

namespace fedsal {

struct Dataset {
  Tensor features;  // [n, sample_shape...]
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  // Stacks the given rows into a batch tensor.
  Tensor batch(std::span<const std::size_t> rows) const;
  std::vector<int> batch_labels(std::span<const std::size_t> rows) const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

// K Gaussian blobs with unit noise; class means are mutually orthogonal and
// pairwise `margin` apart. Labels are balanced (every class appears).
Dataset synth_classification(std::size_t n, const Shape& sample_shape, int classes, double margin,
                             std::uint64_t seed);
inline Dataset synth_classification(std::size_t n, std::size_t dims, int classes, double margin,
                                    std::uint64_t seed) {
  return synth_classification(n, Shape{dims}, classes, margin, seed);
}

struct Partition {
  std::vector<std::vector<std::size_t>> clients;
  std::vector<std::vector<double>> proportions;  // [class][client], as drawn
  double alpha = 0.0;
  std::uint64_t seed = 0;

  std::vector<std::size_t> empty_clients() const;
};

// Per class, draws p ~ Dir_n(alpha) and hands each client a contiguous chunk of
// the shuffled class indices of size floor(p_j * n_k); the remainder goes one
// each to the clients with the largest fractional parts.
Partition dirichlet_partition(const Dataset& ds, std::size_t n_clients, double alpha, std::uint64_t seed);

struct LocalSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Shuffles the client's indices and holds out floor(n * val_fraction) for validation.
LocalSplit split_local(const Partition& part, std::size_t client, double val_fraction, std::uint64_t seed);

// Shannon entropy (nats) of the label histogram over `rows`.
double label_entropy(const Dataset& ds, std::span<const std::size_t> rows);

// CSV rows of feature values followed by an integer label in the last column.
// A first line that does not parse as numbers is treated as a header. Samples
// are reshaped to `sample_shape` when given, else kept flat.
Dataset load_csv(const std::filesystem::path& path, const Shape& sample_shape = {});

}  // namespace fedsal
