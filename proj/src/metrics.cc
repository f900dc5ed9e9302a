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

#include "fedsal/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

#include "fedsal/error.h"

namespace fedsal {

double comm_cost(double rounds, double per_round_client_bytes, double sampled_clients) {
  FEDSAL_CHECK(rounds >= 0.0 && per_round_client_bytes >= 0.0 && sampled_clients >= 0.0,
               "comm_cost: inputs must be non-negative");
  return rounds * per_round_client_bytes * sampled_clients;
}

double top1_accuracy(const Tensor& logits, std::span<const int> labels) {
  FEDSAL_CHECK(logits.rank() == 2 && logits.dim(0) == labels.size(), "top1_accuracy: logits/labels mismatch");
  const std::size_t k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const double* row = logits.raw() + n * k;
    const auto arg = static_cast<int>(std::max_element(row, row + k) - row);
    if (arg == labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const Network& enc, const Network& pred, const Dataset& ds, std::span<const std::size_t> rows) {
  FEDSAL_CHECK(!rows.empty(), "evaluate: empty dataset");
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  for (std::size_t off = 0; off < rows.size(); off += kChunk) {
    auto chunk = rows.subspan(off, std::min(kChunk, rows.size() - off));
    const Tensor logits = predictor_forward(pred, encoder_forward(enc, ds.batch(chunk)));
    const auto labels = ds.batch_labels(chunk);
    correct += static_cast<std::size_t>(std::llround(top1_accuracy(logits, labels) * static_cast<double>(chunk.size())));
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

double evaluate(const Network& enc, const Network& pred, const Dataset& ds) {
  FEDSAL_CHECK(ds.size() > 0, "evaluate: empty dataset");
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), 0);
  return evaluate(enc, pred, ds, rows);
}

double RoundReport::mean_accuracy() const {
  if (clients.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : clients) s += c.accuracy;
  return s / static_cast<double>(clients.size());
}

std::uint64_t RoundReport::bytes_up() const {
  std::uint64_t s = 0;
  for (const auto& c : clients) s += c.bytes_up;
  return s;
}

std::uint64_t RoundReport::bytes_down() const {
  std::uint64_t s = 0;
  for (const auto& c : clients) s += c.bytes_down;
  return s;
}

std::uint64_t RoundReport::ctrl_bytes() const {
  std::uint64_t s = 0;
  for (const auto& c : clients) s += c.ctrl_bytes_up + c.ctrl_bytes_down;
  return s;
}

void CostLedger::add(const RoundReport& report) {
  mean_accuracy_.push_back(report.mean_accuracy());
  cum_up_.push_back(total_bytes_up() + report.bytes_up());
  cum_down_.push_back(total_bytes_down() + report.bytes_down());
  ctrl_ += report.ctrl_bytes();
  for (const auto& c : report.clients) {
    if (c.full_flops > 0)
      flops_reduction_sum_ += 1.0 - static_cast<double>(c.flops) / static_cast<double>(c.full_flops);
    ++records_;
  }
}

double CostLedger::mean_flops_reduction() const {
  return records_ == 0 ? 0.0 : flops_reduction_sum_ / static_cast<double>(records_);
}

std::optional<std::size_t> rounds_to_target(std::span<const double> accuracy, double target) {
  FEDSAL_CHECK(target > 0.0 && target <= 1.0, "rounds_to_target: target must lie in (0,1]");
  for (std::size_t i = 0; i < accuracy.size(); ++i)
    if (accuracy[i] >= target) return i + 1;
  return std::nullopt;
}

std::optional<std::size_t> rounds_to_target(const CostLedger& ledger, double target) {
  return rounds_to_target(ledger.mean_accuracy(), target);
}

void write_rounds_csv_header(std::ostream& os) { os << "round,client_id,bytes_up,bytes_down,acc,flops,sparsity\n"; }

void append_rounds_csv(std::ostream& os, const RoundReport& report) {
  char buf[64];
  for (const auto& c : report.clients) {
    std::snprintf(buf, sizeof buf, "%.6f", c.accuracy);
    os << report.round << ',' << c.client_id << ',' << c.bytes_up << ',' << c.bytes_down << ',' << buf << ','
       << c.flops << ',';
    for (std::size_t i = 0; i < c.sparsity.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.4f", c.sparsity[i]);
      os << (i ? ";" : "") << buf;
    }
    os << '\n';
  }
}

}  // namespace fedsal
