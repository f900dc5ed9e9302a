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

// fedsal: run federated experiments and compare their communication cost.
//
//   fedsal run <config.json | preset> [--seed N] [--out DIR] [--method M]
//              [--clients N] [--sample-ratio R] [--rounds N]
//   fedsal compare <run_dir> <run_dir> [...]
//   fedsal presets

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsal/error.h"
#include "fedsal/experiment.h"

namespace {

bool is_preset(const std::string& name) {
  for (const auto& p : fedsal::preset_names())
    if (p == name) return true;
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with salient-parameter aggregation"};
  app.require_subcommand(1);

  std::string source;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, method;
  std::optional<std::size_t> clients, rounds;
  std::optional<double> sample_ratio;
  bool print_config = false;
  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config or a preset name");
  run->add_option("config", source, "Path to a JSON config, or a preset name")->required();
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--out", out, "Output directory");
  run->add_option("--method", method,
                  "spatl, fedavg, fedprox, scaffold, spatl-no-select, spatl-no-transfer, spatl-no-gradctl");
  run->add_option("--clients", clients, "Number of federated clients");
  run->add_option("--sample-ratio", sample_ratio, "Fraction of clients sampled per round");
  run->add_option("--rounds", rounds, "Number of rounds");
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");

  std::vector<std::string> dirs;
  auto* cmp = app.add_subcommand("compare", "Tabulate communication cost of finished runs (first is the reference)");
  cmp->add_option("run_dirs", dirs, "Run directories holding summary.json")->required()->expected(2, -1);

  app.add_subcommand("presets", "List built-in presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      fedsal::ExperimentConfig cfg;
      if (std::filesystem::is_regular_file(source)) cfg = fedsal::load_config(source);
      else if (is_preset(source)) cfg = fedsal::preset(source);
      else throw fedsal::IoError("'" + source + "' is neither a config file nor a preset");

      if (seed) cfg.fed.seed = *seed;
      if (out) cfg.out_dir = *out;
      if (method) {
        cfg.fed.set_method(fedsal::parse_method(*method));
        cfg.name = *method;
        if (!out) cfg.out_dir = std::filesystem::path("runs") / cfg.name;
      }
      if (clients) cfg.fed.n_clients = *clients;
      if (sample_ratio) cfg.fed.sample_ratio = *sample_ratio;
      if (rounds) cfg.fed.rounds = *rounds;
      cfg.validate();
      if (print_config) {
        std::cout << fedsal::to_json(cfg).dump(2) << "\n";
        return 0;
      }

      const fedsal::ExperimentResult res = fedsal::run_experiment(cfg);
      std::printf("%s: %zu rounds, final mean accuracy %.4f, uplink %llu bytes, FLOPs reduction %.3f\n",
                  cfg.name.c_str(), res.ledger.rounds(), res.final_accuracy,
                  static_cast<unsigned long long>(res.ledger.total_bytes_up()), res.ledger.mean_flops_reduction());
      if (res.transfer_accuracy) std::printf("transfer accuracy %.4f\n", *res.transfer_accuracy);
      if (!res.empty_clients.empty()) std::printf("%zu client(s) received no data\n", res.empty_clients.size());
      std::printf("wrote %s\n", (cfg.out_dir / "summary.json").string().c_str());
    } else if (*cmp) {
      std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
      std::cout << fedsal::comparison_csv(fedsal::compare(paths));
    } else {
      for (const auto& p : fedsal::preset_names()) std::cout << p << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "fedsal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
