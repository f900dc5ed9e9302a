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

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fedsal/error.h"
#include "fedsal/protocol.h"
#include "fixtures.h"
#include "oracles.h"

namespace {

using namespace fedsal;
using fixture::QuadraticObjective;

ParamSet vec(std::initializer_list<double> v, std::string name = "encoder.w") {
  ParamSet p;
  p.add(std::move(name), Tensor(Shape{v.size()}, std::vector<double>(v)));
  return p;
}

ClientState quad_client(double target, ParamSet c_l = {}) {
  ClientState c;
  c.objective = std::make_shared<QuadraticObjective>(target);
  c.c_l = std::move(c_l);
  return c;
}

ServerState quad_server(double w, ParamSet c_g = {}) {
  ServerState s;
  s.global = fixture::scalar_model(w);
  s.c_g = std::move(c_g);
  s.n_clients = 1;
  return s;
}

LocalTrainOptions one_step(double lr = 0.1) {
  LocalTrainOptions o;
  o.epochs = 1;
  o.batch_size = 0;
  o.lr = lr;
  return o;
}

// ---- local updates ---------------------------------------------------------------

TEST(LocalUpdateSpatl, SingleStepWithZeroControl) {
  const ClientState c = quad_client(2.0, fixture::scalar_model(0.0));
  const ServerState s = quad_server(0.0, fixture::scalar_model(0.0));
  const SpatlLocalResult r = local_update_spatl(c, s, one_step(), true);
  EXPECT_EQ(r.steps, 1u);
  EXPECT_NEAR(r.model.at("encoder.w")[0], 0.2, 1e-15);
  EXPECT_NEAR(r.new_c_l.at("encoder.w")[0], -2.0, 1e-12);
  EXPECT_NEAR(r.delta_c.at("encoder.w")[0], -2.0, 1e-12);
}

TEST(LocalUpdateSpatl, CorrectionShiftsTheStep) {
  // c_g - c_l = 0.5: w_e = 0 - 0.1 * (-2 + 0.5)
  const ClientState c = quad_client(2.0, fixture::scalar_model(0.0));
  const ServerState s = quad_server(0.0, fixture::scalar_model(0.5));
  const SpatlLocalResult r = local_update_spatl(c, s, one_step(), true);
  EXPECT_NEAR(r.model.at("encoder.w")[0], 0.15, 1e-15);
}

TEST(LocalUpdateSpatl, UnmovedModelKeepsItsControl) {
  // The corrected gradient vanishes at w_g, so w_e = w_g and c_g = 0 gives c_l* = c_l.
  const ClientState c = quad_client(0.7, fixture::scalar_model(0.3));
  const ServerState s = quad_server(1.0, fixture::scalar_model(0.0));
  const SpatlLocalResult r = local_update_spatl(c, s, one_step(), true);
  EXPECT_NEAR(r.model.at("encoder.w")[0], 1.0, 1e-15);
  EXPECT_NEAR(r.new_c_l.at("encoder.w")[0], 0.3, 1e-12);
  EXPECT_NEAR(r.delta_c.at("encoder.w")[0], 0.0, 1e-12);
}

TEST(LocalUpdateSpatl, StepCountSpansEpochsAndMinibatches) {
  const ClientState c = quad_client(2.0, fixture::scalar_model(0.0));
  const ServerState s = quad_server(0.0, fixture::scalar_model(0.0));
  LocalTrainOptions o = one_step();
  o.epochs = 3;
  const SpatlLocalResult r = local_update_spatl(c, s, o, true);
  EXPECT_EQ(r.steps, 3u);
  const double w = 2.0 * (1.0 - std::pow(0.9, 3));
  EXPECT_NEAR(r.model.at("encoder.w")[0], w, 1e-12);
  EXPECT_NEAR(r.new_c_l.at("encoder.w")[0], (0.0 - w) / (3 * 0.1), 1e-12);
}

TEST(LocalUpdateSpatl, HeadIgnoresTheCorrection) {
  ParamSet target = concat(fixture::scalar_model(2.0), QuadraticObjective::scalar_model(2.0, "predictor.w"));
  ClientState c;
  c.objective = std::make_shared<QuadraticObjective>(target);
  c.predictor = QuadraticObjective::scalar_model(0.0, "predictor.w");
  c.c_l = fixture::scalar_model(0.0);
  const ServerState s = quad_server(0.0, fixture::scalar_model(0.5));
  const SpatlLocalResult r = local_update_spatl(c, s, one_step(), true);
  EXPECT_NEAR(r.model.at("encoder.w")[0], 0.15, 1e-15);
  EXPECT_NEAR(r.model.at("predictor.w")[0], 0.2, 1e-15);
  EXPECT_FALSE(r.new_c_l.contains("predictor.w"));
}

TEST(LocalUpdateSpatl, ZeroLearningRateIsRejected) {
  const ClientState c = quad_client(2.0, fixture::scalar_model(0.0));
  const ServerState s = quad_server(0.0, fixture::scalar_model(0.0));
  EXPECT_THROW(local_update_spatl(c, s, one_step(0.0), true), ContractError);
}

TEST(LocalSgd, EmptyClientRaises) {
  struct Empty final : LocalObjective {
    std::size_t train_size() const override { return 0; }
    ValueAndGrad loss_and_grad(const ParamSet&, std::span<const std::size_t>) const override { return {}; }
    double accuracy(const ParamSet&) const override { return 0.0; }
  } empty;
  EXPECT_THROW(local_sgd(empty, fixture::scalar_model(0.0), one_step()), EmptyClientError);
}

TEST(LocalSgd, TrainablePrefixFreezesTheRest) {
  ParamSet target = concat(fixture::scalar_model(2.0), QuadraticObjective::scalar_model(2.0, "predictor.w"));
  QuadraticObjective obj(target);
  ParamSet start = concat(fixture::scalar_model(0.0), QuadraticObjective::scalar_model(0.0, "predictor.w"));
  LocalTrainOptions o = one_step();
  o.trainable_prefix = kPredictorPrefix;
  const LocalTrainResult r = local_sgd(obj, start, o);
  EXPECT_EQ(r.model.at("encoder.w")[0], 0.0);
  EXPECT_NEAR(r.model.at("predictor.w")[0], 0.2, 1e-15);
}

TEST(LocalUpdateBaseline, ProximalTermExample) {
  const ClientState c = quad_client(2.0);
  const ServerState s = quad_server(0.0);
  // First step: w = w_g, so the proximal pull is zero.
  LocalOutcome one = local_update_baseline(c, s, Method::fedprox, one_step(), 1.0, 32);
  EXPECT_NEAR(one.local_model.at("encoder.w")[0], 0.2, 1e-15);
  // Second step: grad (0.2 - 2) + 1 * (0.2 - 0) = -1.6
  LocalTrainOptions two = one_step();
  two.epochs = 2;
  LocalOutcome prox = local_update_baseline(c, s, Method::fedprox, two, 1.0, 32);
  EXPECT_NEAR(prox.local_model.at("encoder.w")[0], 0.36, 1e-12);
  LocalOutcome avg = local_update_baseline(c, s, Method::fedavg, two, 0.0, 32);
  EXPECT_NEAR(avg.local_model.at("encoder.w")[0], 0.38, 1e-12);
}

TEST(LocalUpdateBaseline, RejectsSpatlMethods) {
  EXPECT_THROW(local_update_baseline(quad_client(1.0), quad_server(0.0), Method::spatl, one_step(), 0.0, 32),
               ContractError);
}

// ---- a small federation ------------------------------------------------------------

struct Federation {
  std::shared_ptr<Dataset> data;
  Model model;
  std::vector<std::shared_ptr<const LocalObjective>> objectives;
};

NetworkSpec fed_encoder() {
  return NetworkSpec{{6}, {LayerSpec::linear(6, 8), LayerSpec::relu(), LayerSpec::linear(8, 5)}};
}
NetworkSpec fed_predictor() { return NetworkSpec{{5}, {LayerSpec::linear(5, 3)}}; }

Federation make_federation(std::size_t n_clients, std::uint64_t seed) {
  Federation f;
  f.data = std::make_shared<Dataset>(synth_classification(300, 6, 3, 4.0, seed));
  f.model.encoder = init_network(fed_encoder(), seed + 1);
  f.model.predictor = init_network(fed_predictor(), seed + 2);
  const Partition part = dirichlet_partition(*f.data, n_clients, 0.5, seed + 3);
  for (std::size_t i = 0; i < n_clients; ++i) {
    const LocalSplit sp = split_local(part, i, 0.2, seed + 4);
    f.objectives.push_back(
        std::make_shared<ClassificationObjective>(f.data, fed_encoder(), fed_predictor(), sp.train, sp.val));
  }
  return f;
}

FederationConfig small_config(Method m, std::size_t n_clients) {
  FederationConfig cfg;
  cfg.set_method(m);
  cfg.n_clients = n_clients;
  cfg.local_epochs = 2;
  cfg.batch_size = 8;
  cfg.lr = 0.05;
  cfg.seed = 11;
  cfg.selection.finetune_episodes = 4;
  cfg.selection.search_episodes = 4;
  cfg.selection.agent.batch_size = 4;
  cfg.selection.agent.ppo_epochs = 2;
  return cfg;
}

struct FedRun {
  ServerState server;
  std::vector<ClientState> clients;
};

FedRun start(const Federation& f, const FederationConfig& cfg) {
  FedRun r;
  const ParamSet joined = f.model.joined_params();
  r.server = init_server(joined, cfg);
  const std::size_t groups = mask_groups(fed_encoder()).size();
  for (std::size_t i = 0; i < cfg.n_clients; ++i) {
    std::optional<Agent> agent;
    if (is_spatl_family(cfg.method) && cfg.flags.salient_selection)
      agent = Agent::create(groups, cfg.selection.agent, 100 + i);
    r.clients.push_back(init_client(i, f.objectives[i], joined, r.server, cfg, std::move(agent)));
  }
  return r;
}

TEST(RunRound, SamplesCeilOfRatio) {
  const Federation f = make_federation(10, 5);
  FederationConfig cfg = small_config(Method::fedavg, 10);
  cfg.sample_ratio = 0.4;
  FedRun r = start(f, cfg);
  const RoundOutcome out = run_round(r.server, r.clients, cfg);
  EXPECT_EQ(out.updates.size(), 4u);
  EXPECT_EQ(out.report.sampled.size(), 4u);
  EXPECT_EQ(out.server.round, 1u);
}

TEST(RunRound, CyclicSamplingWalksTheClients) {
  FederationConfig cfg = small_config(Method::fedavg, 5);
  cfg.sampling = Sampling::cyclic;
  cfg.sample_ratio = 0.4;
  EXPECT_EQ(sample_clients(cfg, 1), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(sample_clients(cfg, 2), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(sample_clients(cfg, 3), (std::vector<std::size_t>{0, 4}));
}

TEST(RunRound, UniformSamplingIsSortedAndDistinct) {
  FederationConfig cfg = small_config(Method::fedavg, 20);
  cfg.sample_ratio = 0.3;
  for (std::size_t round = 1; round <= 20; ++round) {
    const auto s = sample_clients(cfg, round);
    ASSERT_EQ(s.size(), 6u);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
    EXPECT_EQ(s, sample_clients(cfg, round));
  }
}

TEST(RunRound, NoSelectSendsFullEncoder) {
  const Federation f = make_federation(3, 6);
  const FederationConfig cfg = small_config(Method::spatl_no_select, 3);
  FedRun r = start(f, cfg);
  const RoundOutcome out = run_round(r.server, r.clients, cfg);
  const std::size_t encoder_bytes = param_bytes(prefixed(f.model.encoder.params, kEncoderPrefix), 32);
  for (const auto& u : out.updates) {
    EXPECT_EQ(u.selection, full_selection(fed_encoder()));
    for (const auto& s : u.weights.slices) EXPECT_TRUE(s.full_rows) << s.name;
    EXPECT_EQ(u.meta.bytes_up, encoder_bytes);
  }
}

TEST(RunRound, AllKeepSpatlMatchesFedAvg) {
  const Federation f = make_federation(3, 7);
  const FederationConfig avg = small_config(Method::fedavg, 3);
  FederationConfig sp = small_config(Method::spatl, 3);
  sp.flags = {false, false, false};
  FedRun a = start(f, avg);
  FedRun b = start(f, sp);
  for (int round = 0; round < 5; ++round) {
    a.server = run_round(a.server, a.clients, avg).server;
    b.server = run_round(b.server, b.clients, sp).server;
  }
  ASSERT_TRUE(a.server.global.same_layout(b.server.global));
  EXPECT_LE(max_abs_diff(a.server.global, b.server.global), 1e-9);
}

TEST(RunRound, FedProxWithZeroMuIsFedAvg) {
  const Federation f = make_federation(3, 8);
  const FederationConfig avg = small_config(Method::fedavg, 3);
  FederationConfig prox = small_config(Method::fedprox, 3);
  prox.prox_mu = 0.0;
  FedRun a = start(f, avg);
  FedRun b = start(f, prox);
  for (int round = 0; round < 3; ++round) {
    a.server = run_round(a.server, a.clients, avg).server;
    b.server = run_round(b.server, b.clients, prox).server;
  }
  EXPECT_EQ(a.server.global, b.server.global);
}

TEST(RunRound, ScaffoldFirstRoundIsFedAvg) {
  const Federation f = make_federation(3, 9);
  const FederationConfig avg = small_config(Method::fedavg, 3);
  const FederationConfig sc = small_config(Method::scaffold, 3);
  FedRun a = start(f, avg);
  FedRun b = start(f, sc);
  EXPECT_EQ(run_round(a.server, a.clients, avg).server.global, run_round(b.server, b.clients, sc).server.global);
}

void expect_control_conserved(Method m) {
  const Federation f = make_federation(4, 10);
  const FederationConfig cfg = small_config(m, 4);
  FedRun r = start(f, cfg);
  for (int round = 0; round < 4; ++round) {
    r.server = run_round(r.server, r.clients, cfg).server;
    ParamSet mean = r.server.c_g.zeros_like();
    for (const auto& c : r.clients) mean = axpy(mean, 0.25, c.c_l);
    EXPECT_LE(max_abs_diff(mean, r.server.c_g), 1e-9) << method_name(m) << " round " << round + 1;
  }
}

TEST(RunRound, ControlVariatesStayCentered) {
  expect_control_conserved(Method::spatl_no_select);
  expect_control_conserved(Method::scaffold);
  // Partial uploads: local variates move only where the server hears about it.
  expect_control_conserved(Method::spatl);
}

TEST(RunRound, PrivateHeadNeverLeaves) {
  const Federation f = make_federation(3, 12);
  const FederationConfig cfg = small_config(Method::spatl, 3);
  FedRun r = start(f, cfg);
  for (const auto& p : r.server.global) EXPECT_TRUE(p.name.starts_with("encoder.")) << p.name;
  const ParamSet head_before = r.clients[0].predictor;
  const RoundOutcome out = run_round(r.server, r.clients, cfg);
  for (const auto& u : out.updates) {
    for (const auto& s : u.weights.slices) EXPECT_FALSE(s.name.starts_with("predictor.")) << s.name;
    for (const auto& s : u.control_delta.slices) EXPECT_FALSE(s.name.starts_with("predictor.")) << s.name;
  }
  EXPECT_NE(r.clients[0].predictor, head_before);
  for (const auto& p : out.server.global) EXPECT_TRUE(p.name.starts_with("encoder.")) << p.name;
}

TEST(RunRound, SharedHeadTravelsInTheTransferAblation) {
  const Federation f = make_federation(3, 13);
  const FederationConfig cfg = small_config(Method::spatl_no_transfer, 3);
  FedRun r = start(f, cfg);
  EXPECT_TRUE(r.server.global.contains("predictor.layer0.weight"));
  const RoundOutcome out = run_round(r.server, r.clients, cfg);
  for (const auto& u : out.updates) {
    const bool has_head = std::any_of(u.weights.slices.begin(), u.weights.slices.end(),
                                      [](const RowSlice& s) { return s.name == "predictor.layer0.weight"; });
    EXPECT_TRUE(has_head);
  }
}

TEST(RunRound, UplinkNeverExceedsTheFullEncoder) {
  const Federation f = make_federation(4, 14);
  const FederationConfig cfg = small_config(Method::spatl, 4);
  FedRun r = start(f, cfg);
  const std::size_t full = param_bytes(r.server.global, 32);
  std::size_t pruned = 0;
  for (int round = 0; round < 3; ++round) {
    RoundOutcome out = run_round(r.server, r.clients, cfg);
    for (const auto& u : out.updates) {
      EXPECT_LE(u.meta.bytes_up, full);
      EXPECT_EQ(u.meta.bytes_up, param_bytes(u.weights, 32));
      if (prunes_anything(u.selection, fed_encoder())) {
        ++pruned;
        EXPECT_LT(u.meta.bytes_up, full);
        EXPECT_LT(u.meta.flops, u.meta.full_flops);
      }
    }
    r.server = std::move(out.server);
  }
  EXPECT_GT(pruned, 0u);
}

TEST(RunRound, Deterministic) {
  const Federation f = make_federation(3, 15);
  const FederationConfig cfg = small_config(Method::spatl, 3);
  FedRun a = start(f, cfg);
  FedRun b = start(f, cfg);
  for (int round = 0; round < 2; ++round) {
    RoundOutcome x = run_round(a.server, a.clients, cfg);
    RoundOutcome y = run_round(b.server, b.clients, cfg);
    EXPECT_EQ(x.server.global, y.server.global);
    EXPECT_EQ(x.server.c_g, y.server.c_g);
    a.server = std::move(x.server);
    b.server = std::move(y.server);
  }
}

TEST(RunRound, EmptyClientSitsOut) {
  Federation f = make_federation(3, 16);
  f.objectives[1] = std::make_shared<ClassificationObjective>(f.data, fed_encoder(), fed_predictor(),
                                                              std::vector<std::size_t>{}, std::vector<std::size_t>{});
  const FederationConfig cfg = small_config(Method::fedavg, 3);
  FedRun r = start(f, cfg);
  const RoundOutcome out = run_round(r.server, r.clients, cfg);
  EXPECT_EQ(out.report.sampled, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(out.updates.size(), 2u);
}

// ---- aggregation -------------------------------------------------------------------

RowSlice slice(std::string name, std::vector<std::uint32_t> rows, std::vector<double> values) {
  RowSlice s;
  s.name = std::move(name);
  s.full_rows = false;
  const std::size_t n = values.size();
  s.values = Tensor(Shape{n}, std::move(values));
  s.rows = std::move(rows);
  return s;
}

TEST(AggregateSalient, WorkedExample) {
  const ParamSet w_g = vec({0, 0, 0, 4});
  std::vector<SlicedParams> ups{{{slice("encoder.w", {0, 1}, {1, 0})}}, {{slice("encoder.w", {1, 2}, {2, 5})}}};
  const ParamSet out = aggregate_salient(w_g, ups, 1.0);
  EXPECT_EQ(out.at("encoder.w"), Tensor(Shape{4}, std::vector<double>{0.5, 1, 2.5, 4}));
}

TEST(AggregateSalient, CoverageNormalization) {
  const ParamSet w_g = vec({0, 0, 0, 4});
  std::vector<SlicedParams> ups{{{slice("encoder.w", {0, 1}, {1, 0})}}, {{slice("encoder.w", {1, 2}, {2, 5})}}};
  const ParamSet out = aggregate_salient(w_g, ups, 1.0, AggregationNorm::coverage);
  EXPECT_EQ(out.at("encoder.w"), Tensor(Shape{4}, std::vector<double>{1, 1, 5, 4}));
}

TEST(AggregateSalient, SingleFullClientReplacesTheModel) {
  const ParamSet w_g = vec({1, 2, 3});
  const ParamSet w_k = vec({-1, 0.5, 7});
  std::vector<SlicedParams> ups{full_slices(w_k)};
  EXPECT_EQ(aggregate_salient(w_g, ups, 1.0), w_k);
}

TEST(AggregateSalient, UnchangedUploadsAreAFixedPoint) {
  const ParamSet w_g = vec({1, 2, 3});
  std::vector<SlicedParams> ups{full_slices(w_g), {{slice("encoder.w", {2}, {3})}}};
  EXPECT_EQ(aggregate_salient(w_g, ups, 0.7), w_g);
  EXPECT_EQ(aggregate_salient(w_g, std::span<const SlicedParams>{}, 1.0), w_g);
}

TEST(AggregateSalient, MatchesRowByRowOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> lr_dist(0.1, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    ParamSet w_g;
    w_g.add("a", fixture::random_tensor(Shape{5, 3}, rng));
    w_g.add("b", fixture::random_tensor(Shape{4}, rng));
    w_g.add("c", fixture::random_tensor(Shape{3, 2, 2, 2}, rng));
    const std::size_t k = 1 + rng() % 5;
    std::vector<SlicedParams> ups;
    for (std::size_t c = 0; c < k; ++c) {
      SlicedParams sp;
      for (const auto& p : w_g) {
        if (rng() % 4 == 0) continue;
        const std::size_t rows = p.value.dim(0);
        std::vector<std::uint32_t> kept;
        for (std::uint32_t r = 0; r < rows; ++r)
          if (rng() % 2 == 0) kept.push_back(r);
        if (kept.empty()) continue;
        Shape shape = p.value.shape();
        shape[0] = kept.size();
        RowSlice s;
        s.name = p.name;
        s.rows = kept;
        s.full_rows = kept.size() == rows;
        s.values = fixture::random_tensor(shape, rng);
        sp.slices.push_back(std::move(s));
      }
      ups.push_back(std::move(sp));
    }
    const double lr = lr_dist(rng);
    EXPECT_LE(max_abs_diff(aggregate_salient(w_g, ups, lr), oracle::brute_aggregate(w_g, ups, lr)), 1e-12)
        << "trial " << trial;
  }
}

TEST(AggregateSalient, ArrivalOrderDoesNotMatter) {
  std::mt19937_64 rng(22);
  ParamSet w_g;
  w_g.add("a", fixture::random_tensor(Shape{6, 4}, rng));
  std::vector<ClientUpdate> ups;
  for (std::size_t c = 0; c < 6; ++c) {
    ClientUpdate u;
    u.client_id = c;
    ParamSet w = w_g;
    w.at("a") = fixture::random_tensor(Shape{6, 4}, rng, 10.0);
    u.weights = full_slices(w);
    ups.push_back(std::move(u));
  }
  const ParamSet ref = aggregate_salient(w_g, ups, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(ups.begin(), ups.end(), rng);
    EXPECT_EQ(aggregate_salient(w_g, ups, 1.0), ref);
  }
}

TEST(AggregateSalient, RejectsMalformedSlices) {
  const ParamSet w_g = vec({0, 0, 0});
  std::vector<SlicedParams> unknown{{{slice("encoder.v", {0}, {1})}}};
  EXPECT_THROW(aggregate_salient(w_g, unknown, 1.0), ContractError);
  std::vector<SlicedParams> out_of_range{{{slice("encoder.w", {3}, {1})}}};
  EXPECT_THROW(aggregate_salient(w_g, out_of_range, 1.0), ContractError);
  std::vector<SlicedParams> extent{{{slice("encoder.w", {0, 1}, {1})}}};
  EXPECT_THROW(aggregate_salient(w_g, extent, 1.0), ContractError);
  std::vector<SlicedParams> ok{{{slice("encoder.w", {0}, {1})}}};
  EXPECT_THROW(aggregate_salient(w_g, ok, 0.0), ContractError);
}

// ---- global control ----------------------------------------------------------------

TEST(UpdateGlobalControl, AveragesOverRegisteredClients) {
  const ParamSet c_g = vec({0.0});
  std::vector<SlicedParams> deltas{full_slices(vec({0.2})), full_slices(vec({0.4}))};
  EXPECT_NEAR(update_global_control(c_g, deltas, 10).at("encoder.w")[0], 0.06, 1e-15);
}

TEST(UpdateGlobalControl, EmptyListIsIdentity) {
  const ParamSet c_g = vec({0.3, -1});
  EXPECT_EQ(update_global_control(c_g, {}, 4), c_g);
}

TEST(UpdateGlobalControl, TouchesOnlyUploadedRows) {
  const ParamSet c_g = vec({1, 1, 1});
  std::vector<SlicedParams> deltas{{{slice("encoder.w", {1}, {2})}}};
  EXPECT_EQ(update_global_control(c_g, deltas, 2).at("encoder.w"), Tensor(Shape{3}, std::vector<double>{1, 2, 1}));
}

TEST(UpdateGlobalControl, NoClientsIsAContractError) {
  EXPECT_THROW(update_global_control(vec({0}), {}, 0), ContractError);
}

// ---- head fine-tuning --------------------------------------------------------------

TEST(PredictorFinetune, FreezesEncoderAndDoesNotHurt) {
  auto data = std::make_shared<Dataset>(synth_classification(200, 6, 3, 8.0, 31));
  std::vector<std::size_t> train(150), val(50);
  std::iota(train.begin(), train.end(), 0);
  std::iota(val.begin(), val.end(), 150);
  ClassificationObjective obj(data, fed_encoder(), fed_predictor(), train, val);
  const ParamSet enc = prefixed(init_network(fed_encoder(), 32).params, kEncoderPrefix);
  const ParamSet head = prefixed(init_network(fed_predictor(), 33).params, kPredictorPrefix);
  const std::uint64_t enc_hash = fingerprint(enc);
  LocalTrainOptions o;
  o.epochs = 20;
  o.batch_size = 16;
  o.lr = 0.1;
  const ParamSet tuned = predictor_finetune(obj, enc, head, o);
  EXPECT_EQ(fingerprint(enc), enc_hash);
  EXPECT_TRUE(tuned.same_layout(head));
  EXPECT_NE(tuned, head);
  EXPECT_GE(obj.accuracy(concat(enc, tuned)), obj.accuracy(concat(enc, head)));
  o.epochs = 0;
  EXPECT_THROW(predictor_finetune(obj, enc, head, o), ContractError);
}

// ---- methods and config ------------------------------------------------------------

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::spatl, Method::fedavg, Method::fedprox, Method::scaffold, Method::spatl_no_select,
                   Method::spatl_no_transfer, Method::spatl_no_gradctl})
    EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_THROW(parse_method("fedsgd"), ContractError);
  EXPECT_EQ(flags_for(Method::spatl_no_select), (SpatlFlags{false, true, true}));
  EXPECT_EQ(flags_for(Method::fedavg), (SpatlFlags{false, false, false}));
}

TEST(FederationConfigTest, ValidatesRanges) {
  FederationConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = FederationConfig{};
  cfg.sample_ratio = 1.5;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = FederationConfig{};
  cfg.set_method(Method::fedavg);
  cfg.flags.gradient_control = true;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = FederationConfig{};
  cfg.n_clients = 10;
  cfg.sample_ratio = 0.3;
  EXPECT_EQ(cfg.sampled_per_round(), 3u);
  cfg.sample_ratio = 0.01;
  EXPECT_EQ(cfg.sampled_per_round(), 1u);
}

TEST(DeriveSeed, DistinctPurposes) {
  EXPECT_NE(derive_seed(0, 1, 1, 0), derive_seed(0, 2, 1, 0));
  EXPECT_NE(derive_seed(0, 1, 1, 0), derive_seed(0, 1, 1, 1));
  EXPECT_EQ(derive_seed(7, 1, 2, 3), derive_seed(7, 1, 2, 3));
}

}  // namespace
