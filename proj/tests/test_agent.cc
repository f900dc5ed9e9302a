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

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fedsal/agent.h"
#include "fedsal/error.h"
#include "fedsal/flops.h"
#include "fixtures.h"

namespace {

using namespace fedsal;

NetworkSpec mlp2() { return NetworkSpec{{4}, {LayerSpec::linear(4, 6), LayerSpec::linear(6, 3)}}; }

NetworkSpec conv_relu_conv() {
  return NetworkSpec{{1, 4, 4}, {LayerSpec::conv2d(1, 2, 3, 1, 1), LayerSpec::relu(), LayerSpec::conv2d(2, 2, 3, 1, 1)}};
}

NetworkSpec residual_block() {
  return NetworkSpec{{2, 4, 4}, {LayerSpec::conv2d(2, 2, 3, 1, 1), LayerSpec::conv2d(2, 2, 3, 1, 1),
                                 LayerSpec::residual_add(0)}};
}

// Two mask groups; the linear embedding keeps its width.
NetworkSpec small_cnn() {
  return NetworkSpec{{1, 6, 6},
                     {LayerSpec::conv2d(1, 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::conv2d(4, 6, 3, 2, 1),
                      LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::linear(54, 5)}};
}

TEST(BuildGraph, ChainCounts) {
  const CompGraph a = build_graph(mlp2());
  EXPECT_EQ(a.nodes.size(), 3u);
  EXPECT_EQ(a.edges.size(), 2u);
  const CompGraph b = build_graph(conv_relu_conv());
  EXPECT_EQ(b.nodes.size(), 4u);
  EXPECT_EQ(b.edges.size(), 3u);
}

TEST(BuildGraph, ResidualAddsOneSkipEdge) {
  const NetworkSpec spec = residual_block();
  const CompGraph g = build_graph(spec);
  EXPECT_EQ(g.nodes.size(), spec.layers.size() + 1);
  EXPECT_EQ(g.edges.size(), spec.layers.size() + 1);
  std::size_t add_edges = 0;
  for (const auto& e : g.edges) {
    EXPECT_LT(e.src, e.dst);  // acyclic by construction
    add_edges += e.op == EdgeOp::add;
  }
  EXPECT_EQ(add_edges, 2u);
  EXPECT_EQ(g.edges.back().src, 0u);
  EXPECT_EQ(g.edges.back().dst, 3u);
}

TEST(BuildGraph, EdgeFeaturesAreOneHotPlusExtents) {
  const CompGraph g = build_graph(conv_relu_conv());
  const Tensor f = g.edge_matrix();
  EXPECT_EQ(f.shape(), (Shape{3, kEdgeFeatures}));
  EXPECT_EQ(f[0 * kEdgeFeatures + static_cast<std::size_t>(EdgeOp::conv)], 1.0);
  EXPECT_EQ(f[1 * kEdgeFeatures + static_cast<std::size_t>(EdgeOp::relu)], 1.0);
  EXPECT_EQ(g.node_matrix().shape(), (Shape{4, kNodeFeatures}));
  EXPECT_THROW(build_graph(NetworkSpec{{3}, {}}), ContractError);
}

TEST(Policy, ZeroHeadGivesHalfAmax) {
  AgentConfig cfg;
  PolicyNet net = init_policy(2, cfg, 1);
  net.head = net.head.zeros_like();
  const PolicyOutput out = policy_forward(net, build_graph(small_cnn()));
  ASSERT_EQ(out.mean.size(), 2u);
  for (double m : out.mean) EXPECT_DOUBLE_EQ(m, cfg.a_max / 2.0);
  EXPECT_EQ(out.value, 0.0);
}

TEST(Policy, OutputsInRangeAndSizedByGroups) {
  AgentConfig cfg;
  const NetworkSpec spec = small_cnn();
  const PolicyNet net = init_policy(mask_groups(spec).size(), cfg, 4);
  const PolicyOutput out = policy_forward(net, build_graph(spec));
  EXPECT_EQ(out.mean.size(), 2u);
  for (double m : out.mean) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, cfg.a_max);
  }
  EXPECT_EQ(policy_forward(net, build_graph(spec)).mean, out.mean);
}

TEST(Policy, EdgeFeatureChangesOutput) {
  const PolicyNet net = init_policy(2, AgentConfig{}, 7);
  CompGraph g = build_graph(small_cnn());
  const auto before = policy_forward(net, g).mean;
  g.edges[2].in_channels += 0.5;
  EXPECT_NE(policy_forward(net, g).mean, before);
}

TEST(Policy, SizeMismatchIsContractError) {
  Agent agent = Agent::create(3, AgentConfig{}, 1);
  const Network enc = fixture::random_network(small_cnn(), 1);
  EXPECT_THROW(rl_search(agent, enc, [](const Network&) { return 0.5; }, SearchOptions{}), ContractError);
}

TEST(Ppo, ClippedSurrogateExamples) {
  auto one = [](double r, double a) {
    const std::vector<double> rs{r}, as{a};
    return clipped_surrogate(rs, as, 0.2);
  };
  EXPECT_DOUBLE_EQ(one(1.0, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(one(1.5, 1.0), 1.2);
  EXPECT_DOUBLE_EQ(one(0.5, -1.0), -0.8);
}

TEST(Ppo, IdenticalPoliciesGiveMeanAdvantage) {
  const std::vector<double> lp{-1.3, 0.2, -4.0, 2.5}, adv{1.0, -2.0, 0.5, 3.25};
  EXPECT_EQ(ppo_objective(lp, lp, adv, 0.2), (1.0 - 2.0 + 0.5 + 3.25) / 4.0);
}

TEST(Ppo, InvariantToCommonLogProbShift) {
  const std::vector<double> new_lp{-1.0, 0.3, -0.2}, old_lp{-1.1, 0.5, -0.7}, adv{1.0, -1.0, 2.0};
  std::vector<double> n2 = new_lp, o2 = old_lp;
  for (auto& x : n2) x += 5.0;
  for (auto& x : o2) x += 5.0;
  EXPECT_NEAR(ppo_objective(new_lp, old_lp, adv, 0.2), ppo_objective(n2, o2, adv, 0.2), 1e-12);
}

TEST(Ppo, EmptyTrajectoryIsContractError) {
  const std::vector<double> none;
  EXPECT_THROW(ppo_objective(none, none, none, 0.2), ContractError);
  Agent agent = Agent::create(1, AgentConfig{}, 1);
  Trajectory t{build_graph(mlp2()), {}};
  EXPECT_THROW(ppo_update(agent, t, true), ContractError);
  EXPECT_THROW(finetune_head(agent.net, t, agent.cfg), ContractError);
}

TEST(Ppo, TrajectoryObjectiveWithSameNetIsMeanAdvantage) {
  const PolicyNet net = init_policy(2, AgentConfig{}, 2);
  Trajectory t{build_graph(small_cnn()), {}};
  t.steps.push_back({{0.1, 0.2}, {0.1, 0.2}, 0.0, 50.0, 0.0, 1.5});
  t.steps.push_back({{0.6, 0.0}, {0.6, 0.0}, 0.0, 70.0, 0.0, -0.5});
  EXPECT_DOUBLE_EQ(ppo_objective(t, net, net, 0.2), 0.5);
}

TEST(Reward, AccuracyTimesHundred) {
  EXPECT_DOUBLE_EQ(reward(0.85), 85.0);
  EXPECT_EQ(reward(0.0), 0.0);
  EXPECT_EQ(reward(1.0), 100.0);
  EXPECT_THROW(reward(1.01), ContractError);
  EXPECT_THROW(reward(-0.1), ContractError);
}

Trajectory sampled_trajectory(const PolicyNet& net, const CompGraph& g, std::size_t n, std::uint64_t seed,
                              bool zero_adv) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto mu = policy_forward(net, g).mean;
  Trajectory t{g, {}};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> a(mu.size());
    double shift = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = mu[j] + net.sigma * normal(rng);
      shift += a[j] - mu[j];
    }
    // Higher actions are better.
    const double adv = zero_adv ? 0.0 : (shift > 0 ? 1.0 : -1.0);
    t.steps.push_back({a, a, gaussian_log_prob(a, mu, net.sigma), 50.0 + 10.0 * adv, 0.0, adv});
  }
  return t;
}

TEST(FinetuneHead, GraphEncoderFrozen) {
  const AgentConfig cfg;
  const CompGraph g = build_graph(small_cnn());
  PolicyNet net = init_policy(2, cfg, 3);
  const auto enc_hash = fingerprint(net.graph_encoder);
  const auto head_hash = fingerprint(net.head);
  for (int update = 0; update < 10; ++update) net = finetune_head(net, sampled_trajectory(net, g, 8, update, false), cfg);
  EXPECT_EQ(fingerprint(net.graph_encoder), enc_hash);
  EXPECT_NE(fingerprint(net.head), head_hash);
}

TEST(FinetuneHead, ZeroAdvantageLeavesHead) {
  const AgentConfig cfg;
  const CompGraph g = build_graph(small_cnn());
  const PolicyNet net = init_policy(2, cfg, 3);
  const PolicyNet out = finetune_head(net, sampled_trajectory(net, g, 8, 1, true), cfg);
  EXPECT_EQ(out.head, net.head);
  EXPECT_EQ(out.graph_encoder, net.graph_encoder);
}

TEST(FinetuneHead, PositiveAdvantageOnHigherActionsRaisesMean) {
  AgentConfig cfg;
  const CompGraph g = build_graph(small_cnn());
  const PolicyNet net = init_policy(2, cfg, 5);
  const auto before = policy_forward(net, g).mean;
  const PolicyNet out = finetune_head(net, sampled_trajectory(net, g, 64, 9, false), cfg);
  const auto after = policy_forward(out, g).mean;
  EXPECT_GT(std::accumulate(after.begin(), after.end(), 0.0), std::accumulate(before.begin(), before.end(), 0.0));
}

TEST(PpoUpdate, HeadOnlyKeepsEncoderAndSetsAdvantages) {
  Agent agent = Agent::create(2, AgentConfig{}, 8);
  const auto enc = fingerprint(agent.net.graph_encoder);
  Trajectory t = sampled_trajectory(agent.net, build_graph(small_cnn()), 8, 4, false);
  ppo_update(agent, t, true);
  EXPECT_EQ(fingerprint(agent.net.graph_encoder), enc);
  double mean_reward = 0.0;
  for (const auto& s : t.steps) mean_reward += s.reward / 8.0;
  for (const auto& s : t.steps) EXPECT_DOUBLE_EQ(s.advantage, s.reward - mean_reward);

  Trajectory t2 = sampled_trajectory(agent.net, build_graph(small_cnn()), 8, 5, false);
  ppo_update(agent, t2, false);
  EXPECT_NE(fingerprint(agent.net.graph_encoder), enc);
}

// ---- search ---------------------------------------------------------------------

double norm_score(const Network& sub) {
  // A deterministic stand-in for validation accuracy: more kept channels score higher.
  double kept = 0.0;
  for (const auto& l : sub.spec.layers)
    if (l.kind == LayerKind::conv2d) kept += static_cast<double>(l.out);
  return kept / 10.0;
}

TEST(RlSearch, VacuousConstraintAdmitsFirstCandidate) {
  Agent agent = Agent::create(2, AgentConfig{}, 1);
  const Network enc = fixture::random_network(small_cnn(), 2);
  SearchOptions o;
  o.episodes = 1;
  o.max_flops_ratio = 1.0;
  const SearchResult r = rl_search(agent, enc, norm_score, o);
  EXPECT_TRUE(r.constraint_met);
  EXPECT_EQ(r.rewards.size(), 1u);
  EXPECT_EQ(r.infeasible, 0u);
}

TEST(RlSearch, BestSoFarIsRunningMax) {
  Agent agent = Agent::create(2, AgentConfig{}, 1);
  const Network enc = fixture::random_network(small_cnn(), 2);
  SearchOptions o;
  o.episodes = 30;
  o.max_flops_ratio = 0.7;
  o.seed = 3;
  const SearchResult r = rl_search(agent, enc, norm_score, o);
  ASSERT_EQ(r.best_so_far.size(), r.rewards.size());
  double m = -1.0;
  for (std::size_t i = 0; i < r.rewards.size(); ++i) {
    m = std::max(m, r.rewards[i]);
    EXPECT_EQ(r.best_so_far[i], m);
  }
  if (r.constraint_met) {
    EXPECT_EQ(r.best_reward, m);
    EXPECT_LE(r.best_flops_ratio, 0.7 + 1e-12);
  }
  EXPECT_EQ(r.rewards.size() + r.infeasible, 30u);
}

TEST(RlSearch, SigmaZeroIsDeterministicAndFrozen) {
  AgentConfig cfg;
  cfg.sigma = 0.0;
  const Network enc = fixture::random_network(small_cnn(), 2);
  Agent a = Agent::create(2, cfg, 4), b = Agent::create(2, cfg, 4);
  SearchOptions o;
  o.episodes = 16;
  const SearchResult ra = rl_search(a, enc, norm_score, o);
  const SearchResult rb = rl_search(b, enc, norm_score, o);
  EXPECT_EQ(ra.best, rb.best);
  EXPECT_EQ(ra.rewards, rb.rewards);
  EXPECT_EQ(a.net.head, Agent::create(2, cfg, 4).net.head);
}

TEST(RlSearch, InfeasibleConstraintFallsBackToAllKeep) {
  Agent agent = Agent::create(2, AgentConfig{}, 1);
  const Network enc = fixture::random_network(small_cnn(), 2);
  SearchOptions o;
  o.episodes = 5;
  o.max_flops_ratio = 1e-6;
  const SearchResult r = rl_search(agent, enc, norm_score, o);
  EXPECT_FALSE(r.constraint_met);
  EXPECT_EQ(r.infeasible, 5u);
  EXPECT_EQ(r.best, full_selection(enc.spec));
  EXPECT_DOUBLE_EQ(r.best_reward, reward(norm_score(enc)));
  EXPECT_THROW(rl_search(agent, enc, norm_score, SearchOptions{1.0, 0}), ContractError);
}

TEST(RlSearch, UpdatesPolicyEveryBatch) {
  AgentConfig cfg;
  cfg.batch_size = 4;
  Agent agent = Agent::create(2, cfg, 1);
  const auto head = fingerprint(agent.net.head);
  const Network enc = fixture::random_network(small_cnn(), 2);
  SearchOptions o;
  o.episodes = 12;
  const SearchResult r = rl_search(agent, enc, norm_score, o);
  EXPECT_EQ(r.update_rewards.size(), 3u);
  EXPECT_NE(fingerprint(agent.net.head), head);
}

TEST(PolicyCheckpoint, RoundTrip) {
  const PolicyNet net = init_policy(3, AgentConfig{}, 6);
  const auto path = std::filesystem::temp_directory_path() / "fedsal_policy_test.bin";
  save_policy(path, net);
  const PolicyNet back = load_policy(path);
  EXPECT_EQ(back.graph_encoder, net.graph_encoder);
  EXPECT_EQ(back.head, net.head);
  EXPECT_EQ(back.n_actions, 3u);
  EXPECT_EQ(back.a_max, net.a_max);
  std::filesystem::remove(path);
}

}  // namespace
