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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsal/metrics.h"
#include "fedsal/network.h"
#include "fedsal/protocol.h"

namespace fedsal {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "csv"
  std::filesystem::path csv_path;
  std::size_t samples = 2000;
  Shape sample_shape{1, 8, 8};
  int classes = 4;
  double margin = 6.0;
  double val_fraction = 0.2;
};

struct ModelConfig {
  std::string arch = "cnn";  // "cnn" or "mlp"
  // cnn: output channels of each 3x3 conv (the first keeps resolution, the
  // rest halve it); mlp: hidden widths.
  std::vector<std::size_t> widths{8, 16, 16};
  std::size_t embedding = 16;
};

// How the clients' pruning policy is prepared before federated training: the
// graph encoder and head are trained with PPO on a reference task (the same
// encoder architecture trained centrally on separately drawn data).
struct PretrainConfig {
  std::size_t episodes = 160;
  std::size_t reference_samples = 800;
  std::size_t reference_epochs = 10;
};

struct TransferConfig {
  std::size_t clients = 0;  // extra clients held out of federated training
  std::size_t epochs = 5;
};

struct ExperimentConfig {
  std::string name = "spatl";
  FederationConfig fed;
  DataConfig data;
  ModelConfig model;
  PretrainConfig pretrain;
  TransferConfig transfer;
  double target_accuracy = 0.8;
  std::filesystem::path out_dir = "runs/spatl";

  void validate() const;
};

// Strict JSON reading: unknown or mistyped fields raise ParseError naming the field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

std::vector<std::string> preset_names();
ExperimentConfig preset(std::string_view name);

Model build_model(const ModelConfig& model, const Shape& sample_shape, int classes, std::uint64_t seed);

struct ExperimentResult {
  CostLedger ledger;
  std::vector<RoundReport> reports;
  std::vector<std::size_t> empty_clients;
  double final_accuracy = 0.0;
  std::optional<std::size_t> rounds_to_target;
  std::uint64_t bytes_up_to_target = 0;  // cumulative uplink when the target was first met, else the total
  double round_client_bytes = 0.0;       // mean uplink per participating client per round
  std::optional<double> transfer_accuracy;
  nlohmann::json summary;
};

// Runs every round and writes rounds.csv and summary.json under cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Rows: one per run directory, the first being the reference for delta and speedup.
struct ComparisonRow {
  std::string name;
  std::string method;
  std::optional<std::size_t> rounds_to_target;
  double round_client_bytes = 0.0;
  std::uint64_t total_bytes = 0;
  std::int64_t delta_bytes = 0;
  double speedup = 1.0;
};

std::vector<ComparisonRow> compare(std::span<const std::filesystem::path> run_dirs);
std::string comparison_csv(std::span<const ComparisonRow> rows);

}  // namespace fedsal
