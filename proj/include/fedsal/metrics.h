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
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fedsal/data.h"
#include "fedsal/network.h"

namespace fedsal {

inline constexpr double kKiB = 1024.0;
inline constexpr double kMiB = 1024.0 * kKiB;
inline constexpr double kGiB = 1024.0 * kMiB;

// rounds x per-client round cost x sampled clients, in the unit of the cost argument.
double comm_cost(double rounds, double per_round_client_bytes, double sampled_clients);

// Fraction of rows whose argmax (lowest index on ties) equals the label.
double top1_accuracy(const Tensor& logits, std::span<const int> labels);
double evaluate(const Network& enc, const Network& pred, const Dataset& ds);
double evaluate(const Network& enc, const Network& pred, const Dataset& ds, std::span<const std::size_t> rows);

struct ClientRecord {
  std::size_t client_id = 0;
  std::uint64_t bytes_up = 0;    // model payload, indices included
  std::uint64_t bytes_down = 0;  // broadcast model
  std::uint64_t ctrl_bytes_up = 0;
  std::uint64_t ctrl_bytes_down = 0;
  double accuracy = 0.0;
  std::uint64_t flops = 0;       // selected sub-model, per sample
  std::uint64_t full_flops = 0;  // unpruned model, per sample
  std::vector<double> sparsity;
};

struct RoundReport {
  std::size_t round = 0;  // 1-based
  std::vector<std::size_t> sampled;
  std::vector<ClientRecord> clients;

  double mean_accuracy() const;
  std::uint64_t bytes_up() const;
  std::uint64_t bytes_down() const;
  std::uint64_t ctrl_bytes() const;
};

// Append-only accumulation of round reports.
class CostLedger {
 public:
  void add(const RoundReport& report);

  std::size_t rounds() const { return mean_accuracy_.size(); }
  std::uint64_t total_bytes_up() const { return cum_up_.empty() ? 0 : cum_up_.back(); }
  std::uint64_t total_bytes_down() const { return cum_down_.empty() ? 0 : cum_down_.back(); }
  std::uint64_t total_ctrl_bytes() const { return ctrl_; }
  const std::vector<double>& mean_accuracy() const { return mean_accuracy_; }
  const std::vector<std::uint64_t>& cumulative_bytes_up() const { return cum_up_; }
  const std::vector<std::uint64_t>& cumulative_bytes_down() const { return cum_down_; }
  // Mean over all client records of 1 - flops / full_flops.
  double mean_flops_reduction() const;

 private:
  std::vector<double> mean_accuracy_;
  std::vector<std::uint64_t> cum_up_;
  std::vector<std::uint64_t> cum_down_;
  std::uint64_t ctrl_ = 0;
  double flops_reduction_sum_ = 0.0;
  std::size_t records_ = 0;
};

// First 1-based round whose mean client accuracy reaches `target`.
std::optional<std::size_t> rounds_to_target(const CostLedger& ledger, double target);
std::optional<std::size_t> rounds_to_target(std::span<const double> accuracy, double target);

// rounds.csv: round,client_id,bytes_up,bytes_down,acc,flops,sparsity
// acc has 6 decimals; sparsity lists per-group ratios joined by ';'.
void write_rounds_csv_header(std::ostream& os);
void append_rounds_csv(std::ostream& os, const RoundReport& report);

}  // namespace fedsal
