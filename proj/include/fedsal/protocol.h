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
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedsal/agent.h"
#include "fedsal/autograd.h"
#include "fedsal/data.h"
#include "fedsal/metrics.h"
#include "fedsal/network.h"
#include "fedsal/selection.h"

namespace fedsal {

enum class Method { spatl, fedavg, fedprox, scaffold, spatl_no_select, spatl_no_transfer, spatl_no_gradctl };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);
bool is_spatl_family(Method m);

// Switches of the salient-aggregation path; the ablation methods turn one off.
struct SpatlFlags {
  bool salient_selection = true;
  bool gradient_control = true;
  bool private_predictor = true;

  friend bool operator==(const SpatlFlags&, const SpatlFlags&) = default;
};

SpatlFlags flags_for(Method m);

enum class Sampling { uniform, cyclic };
// uniform divides every row by |K|; coverage divides by the number of clients
// that uploaded the row.
enum class AggregationNorm { uniform, coverage };

struct SelectionConfig {
  AgentConfig agent;
  double flops_constraint = 0.5;       // max sub-model FLOPs / full FLOPs
  std::size_t finetune_rounds = 10;    // rounds in which the policy head is updated
  std::size_t finetune_episodes = 20;  // search episodes per fine-tuning round
  std::size_t search_episodes = 8;     // search episodes afterwards
};

struct FederationConfig {
  Method method = Method::spatl;
  SpatlFlags flags = flags_for(Method::spatl);
  std::size_t n_clients = 10;
  double sample_ratio = 1.0;
  std::size_t rounds = 100;
  std::size_t local_epochs = 10;
  std::size_t batch_size = 32;  // 0 means full batch
  double lr = 0.05;
  double server_lr = 1.0;
  double prox_mu = 0.01;
  double alpha = 0.1;
  Sampling sampling = Sampling::uniform;
  AggregationNorm aggregation = AggregationNorm::uniform;
  int wire_bits = 32;
  SelectionConfig selection;
  std::uint64_t seed = 0;

  void set_method(Method m) {
    method = m;
    flags = flags_for(m);
  }
  void validate() const;
  // ceil(sample_ratio * n_clients)
  std::size_t sampled_per_round() const;
};

// Loss and evaluation of one client over its private data. Parameters are the
// joined model ("encoder.*", "predictor.*"); batches index the training rows.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;
  virtual std::size_t train_size() const = 0;
  virtual ValueAndGrad loss_and_grad(const ParamSet& model, std::span<const std::size_t> batch) const = 0;
  virtual double accuracy(const ParamSet& model) const = 0;
  // Encoder architecture, when salient selection applies to this objective.
  virtual const NetworkSpec* encoder_spec() const { return nullptr; }
  virtual double sub_accuracy(const Network& sub_encoder, const ParamSet& model) const;
};

// Softmax cross-entropy of predictor(encoder(x)) over a client's rows of a
// shared dataset. Accuracy uses the validation rows, or the training rows when
// the client has no validation rows.
class ClassificationObjective final : public LocalObjective {
 public:
  ClassificationObjective(std::shared_ptr<const Dataset> data, NetworkSpec encoder, NetworkSpec predictor,
                          std::vector<std::size_t> train, std::vector<std::size_t> val);

  std::size_t train_size() const override { return train_.size(); }
  ValueAndGrad loss_and_grad(const ParamSet& model, std::span<const std::size_t> batch) const override;
  double accuracy(const ParamSet& model) const override;
  const NetworkSpec* encoder_spec() const override { return &encoder_; }
  double sub_accuracy(const Network& sub_encoder, const ParamSet& model) const override;

  const std::vector<std::size_t>& train_rows() const { return train_; }
  const std::vector<std::size_t>& val_rows() const { return val_; }

 private:
  std::shared_ptr<const Dataset> data_;
  NetworkSpec encoder_;
  NetworkSpec predictor_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> val_;
};

struct ServerState {
  ParamSet global;  // w_g: every parameter the server aggregates
  ParamSet c_g;     // empty when no gradient control is active
  std::size_t n_clients = 0;
  std::size_t round = 0;
};

struct ClientState {
  std::size_t id = 0;
  std::shared_ptr<const LocalObjective> objective;
  ParamSet predictor;  // private head ("predictor.*"); empty when the head is shared
  ParamSet c_l;        // same layout as the server's c_g
  std::optional<Agent> agent;
};

struct ClientUpdate {
  std::size_t client_id = 0;
  SalientSelection selection;
  SlicedParams weights;
  SlicedParams control_delta;
  ClientRecord meta;
};

// ---- local computation ----------------------------------------------------------

struct LocalTrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 0;  // 0 means full batch
  double lr = 0.05;
  std::uint64_t seed = 0;
  // Only parameters whose name starts with this prefix move; empty means all.
  std::string_view trainable_prefix;
};

struct LocalTrainResult {
  ParamSet model;
  std::size_t steps = 0;
  double last_loss = 0.0;
};

// Minibatch SGD. `correction` (by name) is added to the matching gradients;
// `prox_mu` > 0 adds mu * (w - anchor) for every parameter.
LocalTrainResult local_sgd(const LocalObjective& objective, ParamSet model, const LocalTrainOptions& opts,
                           const ParamSet* correction = nullptr, double prox_mu = 0.0,
                           const ParamSet* prox_anchor = nullptr);

struct SpatlLocalResult {
  ParamSet model;     // updated shared parameters plus the client's head
  ParamSet new_c_l;   // c_l*, empty without gradient control
  ParamSet delta_c;   // c_l* - c_l
  std::size_t steps = 0;
};

// Encoder steps use grad + (c_g - c_l); the head uses the plain gradient. With
// gradient control, c_l* = c_l - c_g + (w_g - w_e) / (steps * lr), where steps
// counts every minibatch step across local epochs.
SpatlLocalResult local_update_spatl(const ClientState& client, const ServerState& server,
                                    const LocalTrainOptions& opts, bool gradient_control);

// Whole-model baselines: fedavg, fedprox (proximal term mu/2 |w - w_g|^2) and
// scaffold (control variates over every parameter). Uploads full index sets.
struct LocalOutcome {
  ClientUpdate update;
  ClientState next;
  ParamSet local_model;
};

LocalOutcome local_update_baseline(const ClientState& client, const ServerState& server, Method method,
                                   const LocalTrainOptions& opts, double prox_mu, int wire_bits);

// One client's full round under any method (selection included).
LocalOutcome client_round(const ClientState& client, const ServerState& server, const FederationConfig& cfg,
                          std::size_t round);

// Trains only the head ("predictor.*") with the encoder frozen.
ParamSet predictor_finetune(const LocalObjective& objective, const ParamSet& encoder, const ParamSet& predictor,
                            const LocalTrainOptions& opts);

// ---- server ---------------------------------------------------------------------

// w_g[i] += server_lr / |K| * sum over clients that uploaded row i of (w^k[i] - w_g[i]).
// Rows nobody uploaded stay put. Updates are folded in the order given.
ParamSet aggregate_salient(const ParamSet& w_g, std::span<const SlicedParams> updates, double server_lr,
                           AggregationNorm norm = AggregationNorm::uniform);
// Folds in client-id order so the result does not depend on arrival order.
ParamSet aggregate_salient(const ParamSet& w_g, std::span<const ClientUpdate> updates, double server_lr,
                           AggregationNorm norm = AggregationNorm::uniform);

// c_g += (1/|N|) * sum of deltas, each applied only on its rows.
ParamSet update_global_control(const ParamSet& c_g, std::span<const SlicedParams> deltas, std::size_t n_clients);

// ---- rounds ---------------------------------------------------------------------

// Server and client state for a joined initial model. The server aggregates
// the encoder, plus the head when it is shared.
ServerState init_server(const ParamSet& joined_model, const FederationConfig& cfg);
ClientState init_client(std::size_t id, std::shared_ptr<const LocalObjective> objective,
                        const ParamSet& joined_model, const ServerState& server, const FederationConfig& cfg,
                        std::optional<Agent> agent = std::nullopt);

std::vector<std::size_t> sample_clients(const FederationConfig& cfg, std::size_t round);

struct RoundOutcome {
  ServerState server;
  RoundReport report;
  std::vector<ClientUpdate> updates;
};

// Samples clients, runs their local rounds, aggregates weights and control
// variates. Client states are replaced with their post-round values.
RoundOutcome run_round(const ServerState& server, std::vector<ClientState>& clients, const FederationConfig& cfg);

// Deterministic per-purpose seed derivation.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace fedsal
