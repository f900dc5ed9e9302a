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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "fedsal/network.h"
#include "fedsal/optim.h"
#include "fedsal/selection.h"
#include "fedsal/tensor.h"

namespace fedsal {

// ---- environment state --------------------------------------------------------

enum class EdgeOp : std::uint8_t { conv = 0, linear = 1, relu = 2, add = 3, flatten = 4 };

inline constexpr std::size_t kEdgeOpCount = 5;
inline constexpr std::size_t kNodeFeatures = 3;  // channels, spatial size, is-input
inline constexpr std::size_t kEdgeFeatures = kEdgeOpCount + 3;  // one-hot op, in/out channels, kernel

struct GraphEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  EdgeOp op = EdgeOp::relu;
  double in_channels = 0.0;   // normalized by the widest node
  double out_channels = 0.0;
  double kernel = 0.0;        // normalized by the largest kernel
};

// Layer-granularity computational graph: one node per feature map (the input
// plus every layer output), one edge per layer, and one extra edge from the
// skip source of every residual add.
struct CompGraph {
  std::vector<std::array<double, kNodeFeatures>> nodes;
  std::vector<GraphEdge> edges;

  Tensor node_matrix() const;  // [nodes, kNodeFeatures]
  Tensor edge_matrix() const;  // [edges, kEdgeFeatures]
};

CompGraph build_graph(const NetworkSpec& enc);

// ---- policy -------------------------------------------------------------------

struct AgentConfig {
  double gamma = 0.99;  // kept for completeness; the search is one-step
  double clip = 0.2;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double sigma = 0.5;
  double a_max = 0.8;
  std::size_t hidden = 16;
  std::size_t batch_size = 8;    // evaluated sub-models per PPO update
  std::size_t ppo_epochs = 10;   // optimizer steps per PPO update
  double value_coef = 0.5;
  double baseline_momentum = 0.9;

  void validate() const;
};

// Edge-conditioned message passing with mean aggregation and mean readout,
// followed by a two-layer action head and a scalar value head on the readout.
struct PolicyNet {
  ParamSet graph_encoder;
  ParamSet head;
  std::size_t n_actions = 0;
  double a_max = 0.8;
  double sigma = 0.5;
};

PolicyNet init_policy(std::size_t n_actions, const AgentConfig& cfg, std::uint64_t seed);

struct PolicyOutput {
  std::vector<double> mean;  // per mask group, in [0, a_max]
  double value = 0.0;
};

PolicyOutput policy_forward(const PolicyNet& net, const CompGraph& graph);

// ---- PPO ----------------------------------------------------------------------

struct TrajectoryStep {
  std::vector<double> action;   // raw Gaussian sample
  std::vector<double> applied;  // clamped to [0, a_max]
  double log_prob = 0.0;        // under the sampling policy
  double reward = 0.0;
  double value = 0.0;
  double advantage = 0.0;
};

struct Trajectory {
  CompGraph state;
  std::vector<TrajectoryStep> steps;
};

double gaussian_log_prob(std::span<const double> action, std::span<const double> mean, double sigma);

// mean_t min(r_t A_t, clip(r_t, 1-eps, 1+eps) A_t)
double clipped_surrogate(std::span<const double> ratios, std::span<const double> advantages, double eps);
double ppo_objective(std::span<const double> new_log_probs, std::span<const double> old_log_probs,
                     std::span<const double> advantages, double eps);
double ppo_objective(const Trajectory& traj, const PolicyNet& new_net, const PolicyNet& old_net, double eps);

// accuracy x 100
double reward(double accuracy);

// Policy plus optimizer state; one per client, cloned freely.
struct Agent {
  PolicyNet net;
  AgentConfig cfg;
  AdamState encoder_opt;
  AdamState head_opt;
  double baseline = 0.0;
  bool baseline_ready = false;

  static Agent create(std::size_t n_actions, const AgentConfig& cfg, std::uint64_t seed);
  static Agent from_net(PolicyNet net, const AgentConfig& cfg);
};

// Fills advantages (reward minus running-mean baseline), then runs
// cfg.ppo_epochs Adam steps on the clipped objective plus value loss. The value
// head regresses reward / 100.
void ppo_update(Agent& agent, Trajectory& traj, bool head_only);

// Head-only update on the clipped objective alone, with a fresh optimizer;
// graph-encoder weights are returned untouched. Uses the advantages stored in
// `traj`.
PolicyNet finetune_head(const PolicyNet& net, const Trajectory& traj, const AgentConfig& cfg);

// ---- search -------------------------------------------------------------------

using SubModelEvaluator = std::function<double(const Network& sub_encoder)>;

struct SearchOptions {
  double max_flops_ratio = 1.0;
  std::size_t episodes = 20;
  bool update_policy = true;
  bool head_only = true;
  std::uint64_t seed = 0;
};

struct SearchResult {
  SalientSelection best;
  double best_reward = 0.0;
  double best_flops_ratio = 1.0;
  bool constraint_met = false;
  std::size_t infeasible = 0;
  std::vector<double> rewards;         // every evaluated candidate
  std::vector<double> best_so_far;     // running max after each evaluation
  std::vector<double> update_rewards;  // mean reward of each PPO batch
};

// Samples sparsity vectors from the policy, keeps candidates whose FLOPs ratio
// satisfies the constraint, rewards them by validation accuracy and updates the
// policy every cfg.batch_size evaluations. Returns the best candidate (ties go
// to fewer FLOPs); if none was admissible, the all-keep selection.
SearchResult rl_search(Agent& agent, const Network& enc, const SubModelEvaluator& evaluate,
                       const SearchOptions& opts);

void save_policy(const std::filesystem::path& path, const PolicyNet& net);
PolicyNet load_policy(const std::filesystem::path& path);

}  // namespace fedsal
