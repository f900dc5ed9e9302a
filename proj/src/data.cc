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

#include "fedsal/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "fedsal/error.h"

namespace fedsal {

Shape Dataset::sample_shape() const {
  const Shape& s = features.shape();
  return Shape(s.begin() + 1, s.end());
}

Tensor Dataset::batch(std::span<const std::size_t> rows) const {
  FEDSAL_CHECK(!rows.empty(), "empty batch");
  Shape shape = features.shape();
  const std::size_t row = features.numel() / shape[0];
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    FEDSAL_CHECK(rows[i] < size(), "dataset row out of range");
    std::copy_n(features.raw() + rows[i] * row, row, out.raw() + i * row);
  }
  return out;
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels.at(r));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  return Dataset{batch(rows), batch_labels(rows), num_classes};
}

Dataset synth_classification(std::size_t n, const Shape& sample_shape, int classes, double margin,
                             std::uint64_t seed) {
  FEDSAL_CHECK(classes >= 2, "synth_classification: need at least 2 classes");
  FEDSAL_CHECK(n >= static_cast<std::size_t>(classes), "synth_classification: need n >= number of classes");
  FEDSAL_CHECK(margin >= 0.0 && std::isfinite(margin), "synth_classification: margin must be finite and >= 0");
  const std::size_t d = numel(sample_shape);
  FEDSAL_CHECK(d >= static_cast<std::size_t>(classes), "synth_classification: need at least as many dims as classes");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto k = static_cast<std::size_t>(classes);

  // Gram-Schmidt on Gaussian directions gives orthonormal class means.
  std::vector<std::vector<double>> means(k, std::vector<double>(d));
  for (std::size_t c = 0; c < k; ++c) {
    auto& m = means[c];
    for (;;) {
      for (auto& v : m) v = normal(rng);
      for (std::size_t p = 0; p < c; ++p) {
        const double dot = std::inner_product(m.begin(), m.end(), means[p].begin(), 0.0);
        for (std::size_t j = 0; j < d; ++j) m[j] -= dot * means[p][j];
      }
      const double norm = std::sqrt(std::inner_product(m.begin(), m.end(), m.begin(), 0.0));
      if (norm > 1e-6) {
        for (auto& v : m) v /= norm;
        break;
      }
    }
  }
  const double radius = margin / std::sqrt(2.0);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);
  std::shuffle(labels.begin(), labels.end(), rng);

  Shape shape{n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor x(shape);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = means[static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = radius * m[j] + normal(rng);
  }
  return Dataset{std::move(x), std::move(labels), classes};
}

std::vector<std::size_t> Partition::empty_clients() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clients.size(); ++i)
    if (clients[i].empty()) out.push_back(i);
  return out;
}

Partition dirichlet_partition(const Dataset& ds, std::size_t n_clients, double alpha, std::uint64_t seed) {
  FEDSAL_CHECK(n_clients >= 1, "dirichlet_partition: need at least one client");
  FEDSAL_CHECK(alpha > 0.0 && std::isfinite(alpha), "dirichlet_partition: alpha must be positive");
  Partition part;
  part.alpha = alpha;
  part.seed = seed;
  part.clients.resize(n_clients);

  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (int cls = 0; cls < ds.num_classes; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);

    std::vector<double> p(n_clients);
    double total = 0.0;
    while (total <= 0.0) {
      for (auto& v : p) v = gamma(rng);
      total = std::accumulate(p.begin(), p.end(), 0.0);
    }
    for (auto& v : p) v /= total;
    part.proportions.push_back(p);

    const double nk = static_cast<double>(idx.size());
    std::vector<std::size_t> counts(n_clients);
    std::vector<double> frac(n_clients);
    std::size_t assigned = 0;
    for (std::size_t j = 0; j < n_clients; ++j) {
      const double share = p[j] * nk;
      counts[j] = static_cast<std::size_t>(std::floor(share));
      frac[j] = share - static_cast<double>(counts[j]);
      assigned += counts[j];
    }
    std::vector<std::size_t> order(n_clients);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; assigned < idx.size(); ++r, ++assigned) counts[order[r % n_clients]] += 1;

    std::size_t pos = 0;
    for (std::size_t j = 0; j < n_clients; ++j) {
      part.clients[j].insert(part.clients[j].end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                             idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[j]));
      pos += counts[j];
    }
  }
  return part;
}

LocalSplit split_local(const Partition& part, std::size_t client, double val_fraction, std::uint64_t seed) {
  FEDSAL_CHECK(client < part.clients.size(), "split_local: client index out of range");
  FEDSAL_CHECK(val_fraction > 0.0 && val_fraction < 1.0, "split_local: val_fraction must lie in (0,1)");
  std::vector<std::size_t> idx = part.clients[client];
  if (idx.empty()) throw EmptyClientError("client " + std::to_string(client) + " has no samples");
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  // the small epsilon keeps exact products such as 10 * 0.2 from flooring low
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(idx.size()) * val_fraction + 1e-9));
  LocalSplit s;
  s.train.assign(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_val));
  s.val.assign(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
  return s;
}

double label_entropy(const Dataset& ds, std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  std::vector<double> hist(static_cast<std::size_t>(ds.num_classes), 0.0);
  for (auto r : rows) hist.at(static_cast<std::size_t>(ds.labels.at(r))) += 1.0;
  double h = 0.0;
  const double n = static_cast<double>(rows.size());
  for (double c : hist)
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  return h;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

bool parse_double(const std::string& s, double& v) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  return ec == std::errc() && ptr == last;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const Shape& sample_shape) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset '" + path.string() + "'");
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    double probe = 0.0;
    if (lineno == 1 && !cells.empty() && !parse_double(cells[0], probe)) continue;  // header
    if (cells.size() < 2) throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": need features and a label");
    if (width == 0) width = cells.size() - 1;
    if (cells.size() - 1 != width)
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": expected " + std::to_string(width + 1) +
                       " columns, got " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v) || !std::isfinite(v))
        throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": column " + std::to_string(c + 1) +
                         " is not a finite number");
      values.push_back(v);
    }
    int y = 0;
    const std::string& lab = cells.back();
    auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), y);
    if (ec != std::errc() || ptr != lab.data() + lab.size() || y < 0)
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": label column is not a non-negative integer");
    labels.push_back(y);
  }
  if (labels.empty()) throw ParseError(path.string() + ": no samples");
  Shape shape{labels.size()};
  if (sample_shape.empty()) {
    shape.push_back(width);
  } else {
    if (numel(sample_shape) != width)
      throw ParseError(path.string() + ": " + std::to_string(width) + " feature columns do not fit sample shape " +
                       shape_str(sample_shape));
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  }
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  return Dataset{Tensor(std::move(shape), std::move(values)), std::move(labels), std::max(k, 2)};
}

}  // namespace fedsal
