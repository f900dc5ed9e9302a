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

#include "fedsal/agent.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fedsal/autograd.h"
#include "fedsal/checkpoint.h"
#include "fedsal/error.h"
#include "fedsal/flops.h"

namespace fedsal {

// ---- graph --------------------------------------------------------------------

Tensor CompGraph::node_matrix() const {
  FEDSAL_CHECK(!nodes.empty(), "graph has no nodes");
  Tensor m({nodes.size(), kNodeFeatures});
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = 0; j < kNodeFeatures; ++j) m[i * kNodeFeatures + j] = nodes[i][j];
  return m;
}

Tensor CompGraph::edge_matrix() const {
  FEDSAL_CHECK(!edges.empty(), "graph has no edges");
  Tensor m({edges.size(), kEdgeFeatures});
  for (std::size_t i = 0; i < edges.size(); ++i) {
    double* row = m.raw() + i * kEdgeFeatures;
    row[static_cast<std::size_t>(edges[i].op)] = 1.0;
    row[kEdgeOpCount + 0] = edges[i].in_channels;
    row[kEdgeOpCount + 1] = edges[i].out_channels;
    row[kEdgeOpCount + 2] = edges[i].kernel;
  }
  return m;
}

CompGraph build_graph(const NetworkSpec& enc) {
  FEDSAL_CHECK(!enc.layers.empty(), "build_graph: encoder has no layers");
  const auto shapes = enc.node_shapes();
  double max_ch = 1.0, max_sp = 1.0, max_k = 1.0;
  for (const auto& s : shapes) {
    max_ch = std::max(max_ch, static_cast<double>(s[0]));
    if (s.size() == 3) max_sp = std::max(max_sp, static_cast<double>(s[1] * s[2]));
  }
  for (const auto& l : enc.layers) max_k = std::max(max_k, static_cast<double>(l.kernel));

  CompGraph g;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    const double sp = s.size() == 3 ? static_cast<double>(s[1] * s[2]) : 1.0;
    g.nodes.push_back({static_cast<double>(s[0]) / max_ch, sp / max_sp, i == 0 ? 1.0 : 0.0});
  }
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    const LayerSpec& l = enc.layers[i];
    GraphEdge e;
    e.src = i;
    e.dst = i + 1;
    e.in_channels = static_cast<double>(shapes[i][0]) / max_ch;
    e.out_channels = static_cast<double>(shapes[i + 1][0]) / max_ch;
    switch (l.kind) {
      case LayerKind::conv2d:
        e.op = EdgeOp::conv;
        e.kernel = static_cast<double>(l.kernel) / max_k;
        break;
      case LayerKind::linear:
        e.op = EdgeOp::linear;
        e.kernel = 1.0 / max_k;
        break;
      case LayerKind::relu: e.op = EdgeOp::relu; break;
      case LayerKind::flatten: e.op = EdgeOp::flatten; break;
      case LayerKind::residual_add: e.op = EdgeOp::add; break;
    }
    g.edges.push_back(e);
    if (l.kind == LayerKind::residual_add) {
      GraphEdge skip = e;
      skip.src = l.skip_from;
      skip.in_channels = static_cast<double>(shapes[l.skip_from][0]) / max_ch;
      g.edges.push_back(skip);
    }
  }
  return g;
}

// ---- policy -------------------------------------------------------------------

void AgentConfig::validate() const {
  FEDSAL_CHECK(clip > 0.0 && clip < 1.0, "agent: clip must lie in (0,1)");
  FEDSAL_CHECK(gamma > 0.0 && gamma <= 1.0, "agent: gamma must lie in (0,1]");
  FEDSAL_CHECK(lr > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0,
               "agent: invalid optimizer settings");
  FEDSAL_CHECK(sigma >= 0.0 && std::isfinite(sigma), "agent: sigma must be finite and >= 0");
  FEDSAL_CHECK(a_max > 0.0 && a_max <= 1.0, "agent: a_max must lie in (0,1]");
  FEDSAL_CHECK(hidden > 0 && batch_size > 0 && ppo_epochs > 0, "agent: sizes must be positive");
  FEDSAL_CHECK(baseline_momentum >= 0.0 && baseline_momentum < 1.0, "agent: baseline momentum must lie in [0,1)");
}

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

struct PolicyVars {
  ag::Var mean;   // [1, N]
  ag::Var value;  // [1, 1]
};

PolicyVars policy_on_tape(ag::Tape& t, std::span<const ag::Var> gnn, std::span<const ag::Var> head,
                          const CompGraph& g, double a_max) {
  const std::size_t n = g.nodes.size(), m = g.edges.size();
  Tensor src({m, n}), incoming({n, m}), readout({1, n}, 1.0 / static_cast<double>(n));
  std::vector<double> indeg(n, 0.0);
  for (const auto& e : g.edges) indeg[e.dst] += 1.0;
  for (std::size_t k = 0; k < m; ++k) {
    src[k * n + g.edges[k].src] = 1.0;
    incoming[g.edges[k].dst * m + k] = 1.0 / indeg[g.edges[k].dst];
  }
  ag::Var X = t.constant(g.node_matrix());
  ag::Var F = t.constant(g.edge_matrix());
  ag::Var S = t.constant(std::move(src));
  ag::Var T = t.constant(std::move(incoming));
  ag::Var R = t.constant(std::move(readout));

  ag::Var msg = ag::relu(ag::add_bias(ag::add(ag::matmul(ag::matmul(S, X), gnn[0]), ag::matmul(F, gnn[1])), gnn[2]));
  ag::Var h = ag::relu(ag::add_bias(ag::add(ag::matmul(X, gnn[3]), ag::matmul(T, msg)), gnn[4]));
  ag::Var emb = ag::matmul(R, h);
  ag::Var z = ag::relu(ag::add_bias(ag::matmul(emb, head[0]), head[1]));
  ag::Var mean = ag::scale(ag::sigmoid(ag::add_bias(ag::matmul(z, head[2]), head[3])), a_max);
  ag::Var value = ag::add_bias(ag::matmul(emb, head[4]), head[5]);
  return {mean, value};
}

std::vector<ag::Var> leaves(ag::Tape& t, const ParamSet& ps, bool trainable) {
  std::vector<ag::Var> out;
  for (const auto& p : ps) out.push_back(trainable ? t.variable(p.value) : t.constant(p.value));
  return out;
}

}  // namespace

PolicyNet init_policy(std::size_t n_actions, const AgentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FEDSAL_CHECK(n_actions > 0, "init_policy: need at least one action");
  std::mt19937_64 rng(seed);
  const std::size_t h = cfg.hidden;
  PolicyNet net;
  net.n_actions = n_actions;
  net.a_max = cfg.a_max;
  net.sigma = cfg.sigma;
  net.graph_encoder.add("w_src", xavier(kNodeFeatures, h, rng));
  net.graph_encoder.add("w_edge", xavier(kEdgeFeatures, h, rng));
  net.graph_encoder.add("b_msg", Tensor({h}));
  net.graph_encoder.add("w_self", xavier(kNodeFeatures, h, rng));
  net.graph_encoder.add("b_node", Tensor({h}, 0.01));
  net.head.add("w_hidden", xavier(h, h, rng));
  net.head.add("b_hidden", Tensor({h}, 0.01));
  net.head.add("w_action", xavier(h, n_actions, rng));
  net.head.add("b_action", Tensor({n_actions}));
  net.head.add("w_value", Tensor({h, 1}));
  net.head.add("b_value", Tensor({1}));
  return net;
}

PolicyOutput policy_forward(const PolicyNet& net, const CompGraph& graph) {
  ag::Tape t;
  auto gnn = leaves(t, net.graph_encoder, false);
  auto head = leaves(t, net.head, false);
  FEDSAL_CHECK(gnn.size() == 5 && head.size() == 6, "policy_forward: malformed policy parameters");
  PolicyVars out = policy_on_tape(t, gnn, head, graph, net.a_max);
  FEDSAL_CHECK(out.mean.shape()[1] == net.n_actions, "policy_forward: head size disagrees with n_actions");
  const auto m = out.mean.value().data();
  return {std::vector<double>(m.begin(), m.end()), out.value.value().item()};
}

// ---- PPO ----------------------------------------------------------------------

double gaussian_log_prob(std::span<const double> action, std::span<const double> mean, double sigma) {
  FEDSAL_CHECK(action.size() == mean.size(), "gaussian_log_prob: size mismatch");
  FEDSAL_CHECK(sigma > 0.0, "gaussian_log_prob: sigma must be positive");
  const double norm = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double z = (action[i] - mean[i]) / sigma;
    lp += -0.5 * z * z + norm;
  }
  return lp;
}

double clipped_surrogate(std::span<const double> ratios, std::span<const double> advantages, double eps) {
  FEDSAL_CHECK(!ratios.empty(), "ppo objective: empty trajectory");
  FEDSAL_CHECK(ratios.size() == advantages.size(), "ppo objective: ratio/advantage count mismatch");
  FEDSAL_CHECK(eps > 0.0 && eps < 1.0, "ppo objective: eps must lie in (0,1)");
  double s = 0.0;
  for (std::size_t t = 0; t < ratios.size(); ++t) {
    const double r = ratios[t], a = advantages[t];
    s += std::min(r * a, std::clamp(r, 1.0 - eps, 1.0 + eps) * a);
  }
  return s / static_cast<double>(ratios.size());
}

double ppo_objective(std::span<const double> new_log_probs, std::span<const double> old_log_probs,
                     std::span<const double> advantages, double eps) {
  FEDSAL_CHECK(new_log_probs.size() == old_log_probs.size(), "ppo objective: log-prob count mismatch");
  std::vector<double> ratios(new_log_probs.size());
  for (std::size_t t = 0; t < ratios.size(); ++t) ratios[t] = std::exp(new_log_probs[t] - old_log_probs[t]);
  return clipped_surrogate(ratios, advantages, eps);
}

double ppo_objective(const Trajectory& traj, const PolicyNet& new_net, const PolicyNet& old_net, double eps) {
  FEDSAL_CHECK(!traj.steps.empty(), "ppo objective: empty trajectory");
  const auto mu_new = policy_forward(new_net, traj.state).mean;
  const auto mu_old = policy_forward(old_net, traj.state).mean;
  std::vector<double> lp_new, lp_old, adv;
  for (const auto& s : traj.steps) {
    lp_new.push_back(gaussian_log_prob(s.action, mu_new, new_net.sigma));
    lp_old.push_back(gaussian_log_prob(s.action, mu_old, old_net.sigma));
    adv.push_back(s.advantage);
  }
  return ppo_objective(lp_new, lp_old, adv, eps);
}

double reward(double accuracy) {
  FEDSAL_CHECK(accuracy >= 0.0 && accuracy <= 1.0, "reward: accuracy must lie in [0,1]");
  return accuracy * 100.0;
}

Agent Agent::create(std::size_t n_actions, const AgentConfig& cfg, std::uint64_t seed) {
  return from_net(init_policy(n_actions, cfg, seed), cfg);
}

Agent Agent::from_net(PolicyNet net, const AgentConfig& cfg) {
  cfg.validate();
  Agent a;
  a.cfg = cfg;
  a.net = std::move(net);
  a.net.sigma = cfg.sigma;
  a.net.a_max = cfg.a_max;
  a.encoder_opt = AdamState::init(a.net.graph_encoder);
  a.head_opt = AdamState::init(a.net.head);
  return a;
}

namespace {

struct PpoGrads {
  ParamSet encoder;
  ParamSet head;
};

// Gradient of -(clipped objective) + value_coef * mean (V - reward/100)^2.
PpoGrads ppo_loss_grad(const PolicyNet& net, const Trajectory& traj, const AgentConfig& cfg, bool head_only,
                       double value_coef) {
  const std::size_t T = traj.steps.size(), N = net.n_actions;
  Tensor actions({T, N}), old_lp({T, 1}), adv({T, 1}), target({T, 1});
  for (std::size_t t = 0; t < T; ++t) {
    const auto& s = traj.steps[t];
    FEDSAL_CHECK(s.action.size() == N, "ppo_update: action length disagrees with policy");
    std::copy(s.action.begin(), s.action.end(), actions.raw() + t * N);
    old_lp[t] = s.log_prob;
    adv[t] = s.advantage;
    target[t] = s.reward / 100.0;
  }
  const double sigma = net.sigma;
  const double norm = static_cast<double>(N) * (-std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi));

  ag::Tape t;
  auto gnn = leaves(t, net.graph_encoder, !head_only);
  auto head = leaves(t, net.head, true);
  PolicyVars pv = policy_on_tape(t, gnn, head, traj.state, net.a_max);

  ag::Var ones_t = t.constant(Tensor({T, 1}, 1.0));
  ag::Var ones_n = t.constant(Tensor({N, 1}, 1.0));
  ag::Var mu = ag::matmul(ones_t, pv.mean);  // [T,N]
  ag::Var sq = ag::square(ag::sub(mu, t.constant(actions)));
  ag::Var lp = ag::add_scalar(ag::scale(ag::matmul(sq, ones_n), -0.5 / (sigma * sigma)), norm);
  ag::Var ratio = ag::exp(ag::sub(lp, t.constant(old_lp)));
  ag::Var A = t.constant(adv);
  ag::Var surr = ag::minimum(ag::mul(ratio, A), ag::mul(ag::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), A));
  ag::Var v = ag::matmul(ones_t, pv.value);
  ag::Var vloss = ag::mean(ag::square(ag::sub(v, t.constant(target))));
  ag::Var loss = ag::add(ag::scale(ag::mean(surr), -1.0), ag::scale(vloss, value_coef));
  t.backward(loss);

  PpoGrads g;
  for (std::size_t i = 0; i < gnn.size(); ++i) g.encoder.add(net.graph_encoder[i].name, t.grad(gnn[i]));
  for (std::size_t i = 0; i < head.size(); ++i) g.head.add(net.head[i].name, t.grad(head[i]));
  return g;
}

AdamConfig adam_config(const AgentConfig& cfg) { return {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps}; }

}  // namespace

void ppo_update(Agent& agent, Trajectory& traj, bool head_only) {
  FEDSAL_CHECK(!traj.steps.empty(), "ppo_update: empty trajectory");
  FEDSAL_CHECK(agent.net.sigma > 0.0, "ppo_update: needs a stochastic policy (sigma > 0)");
  double batch_mean = 0.0;
  for (const auto& s : traj.steps) batch_mean += s.reward;
  batch_mean /= static_cast<double>(traj.steps.size());
  if (!agent.baseline_ready) {
    agent.baseline = batch_mean;
    agent.baseline_ready = true;
  }
  for (auto& s : traj.steps) s.advantage = s.reward - agent.baseline;

  const AdamConfig acfg = adam_config(agent.cfg);
  for (std::size_t e = 0; e < agent.cfg.ppo_epochs; ++e) {
    PpoGrads g = ppo_loss_grad(agent.net, traj, agent.cfg, head_only, agent.cfg.value_coef);
    agent.head_opt.params = agent.net.head;
    agent.head_opt = adam_step(std::move(agent.head_opt), g.head, acfg);
    agent.net.head = agent.head_opt.params;
    if (!head_only) {
      agent.encoder_opt.params = agent.net.graph_encoder;
      agent.encoder_opt = adam_step(std::move(agent.encoder_opt), g.encoder, acfg);
      agent.net.graph_encoder = agent.encoder_opt.params;
    }
  }
  const double m = agent.cfg.baseline_momentum;
  agent.baseline = m * agent.baseline + (1.0 - m) * batch_mean;
}

PolicyNet finetune_head(const PolicyNet& net, const Trajectory& traj, const AgentConfig& cfg) {
  FEDSAL_CHECK(!traj.steps.empty(), "finetune_head: empty trajectory");
  FEDSAL_CHECK(net.sigma > 0.0, "finetune_head: needs a stochastic policy (sigma > 0)");
  PolicyNet out = net;
  AdamState opt = AdamState::init(out.head);
  const AdamConfig acfg = adam_config(cfg);
  for (std::size_t e = 0; e < cfg.ppo_epochs; ++e) {
    PpoGrads g = ppo_loss_grad(out, traj, cfg, true, 0.0);
    opt = adam_step(std::move(opt), g.head, acfg);
    out.head = opt.params;
  }
  return out;
}

// ---- search -------------------------------------------------------------------

SearchResult rl_search(Agent& agent, const Network& enc, const SubModelEvaluator& evaluate,
                       const SearchOptions& opts) {
  FEDSAL_CHECK(opts.episodes >= 1, "rl_search: episodes must be >= 1");
  FEDSAL_CHECK(opts.max_flops_ratio > 0.0, "rl_search: FLOPs constraint must be positive");
  const auto groups = mask_groups(enc.spec);
  FEDSAL_CHECK(groups.size() == agent.net.n_actions, "rl_search: policy sized for " +
                                                         std::to_string(agent.net.n_actions) + " groups, encoder has " +
                                                         std::to_string(groups.size()));
  const CompGraph graph = build_graph(enc.spec);
  const double full_flops = static_cast<double>(count_flops(enc.spec));
  const double sigma = agent.net.sigma;
  const bool learn = opts.update_policy && sigma > 0.0;

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SearchResult res;
  Trajectory batch{graph, {}};
  double best_score = -std::numeric_limits<double>::infinity();

  for (std::size_t ep = 0; ep < opts.episodes; ++ep) {
    const PolicyOutput out = policy_forward(agent.net, graph);
    std::vector<double> raw(out.mean.size()), applied(out.mean.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
      raw[j] = sigma > 0.0 ? out.mean[j] + sigma * normal(rng) : out.mean[j];
      applied[j] = std::clamp(raw[j], 0.0, agent.net.a_max);
    }
    SalientSelection sel = select_salient(enc, applied);
    Network sub = apply_selection(enc, sel);
    const double ratio = full_flops > 0.0 ? static_cast<double>(count_flops(sub.spec)) / full_flops : 1.0;
    if (ratio > opts.max_flops_ratio + 1e-12) {
      ++res.infeasible;
      continue;
    }
    const double r = reward(evaluate(sub));
    res.rewards.push_back(r);
    if (!res.constraint_met || r > res.best_reward || (r == res.best_reward && ratio < res.best_flops_ratio)) {
      res.best = sel;
      res.best_reward = r;
      res.best_flops_ratio = ratio;
    }
    res.constraint_met = true;
    best_score = std::max(best_score, r);
    res.best_so_far.push_back(best_score);

    if (learn) {
      batch.steps.push_back({raw, applied, gaussian_log_prob(raw, out.mean, sigma), r, out.value, 0.0});
      if (batch.steps.size() == agent.cfg.batch_size) {
        double m = 0.0;
        for (const auto& s : batch.steps) m += s.reward;
        res.update_rewards.push_back(m / static_cast<double>(batch.steps.size()));
        ppo_update(agent, batch, opts.head_only);
        batch.steps.clear();
      }
    }
  }

  if (!res.constraint_met) {
    res.best = full_selection(enc.spec);
    res.best_reward = reward(evaluate(enc));
    res.best_flops_ratio = 1.0;
  }
  return res;
}

void save_policy(const std::filesystem::path& path, const PolicyNet& net) {
  Checkpoint ck;
  ck.meta = {{"n_actions", static_cast<double>(net.n_actions)}, {"a_max", net.a_max}, {"sigma", net.sigma}};
  ck.params = concat(prefixed(net.graph_encoder, "gnn"), prefixed(net.head, "head"));
  save_checkpoint(path, ck);
}

PolicyNet load_policy(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  PolicyNet net;
  for (const auto& [k, v] : ck.meta) {
    if (k == "n_actions") net.n_actions = static_cast<std::size_t>(v);
    else if (k == "a_max") net.a_max = v;
    else if (k == "sigma") net.sigma = v;
  }
  net.graph_encoder = unprefixed(ck.params, "gnn");
  net.head = unprefixed(ck.params, "head");
  if (net.graph_encoder.size() != 5 || net.head.size() != 6 || net.n_actions == 0)
    throw IoError("'" + path.string() + "' is not a policy checkpoint");
  return net;
}

}  // namespace fedsal
