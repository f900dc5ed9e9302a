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

#include "fedsal/protocol.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fedsal/error.h"
#include "fedsal/flops.h"

namespace fedsal {

namespace {

std::string head_of(std::string_view prefix) { return std::string(prefix) + "."; }

// Parameters whose name starts with "<prefix>.", names kept.
ParamSet keep_prefix(const ParamSet& ps, std::string_view prefix) {
  const std::string head = head_of(prefix);
  ParamSet out;
  for (const auto& p : ps)
    if (p.name.starts_with(head)) out.add(p.name, p.value);
  return out;
}

ParamSet drop_prefix(const ParamSet& ps, std::string_view prefix) {
  const std::string head = head_of(prefix);
  ParamSet out;
  for (const auto& p : ps)
    if (!p.name.starts_with(head)) out.add(p.name, p.value);
  return out;
}

std::size_t row_count(const Tensor& t) { return t.rank() == 0 ? 1 : t.dim(0); }

// Vars of `spec` in declaration order, looked up as "<prefix>.layer{i}.*".
std::vector<ag::Var> network_vars(const NetworkSpec& spec, const ParamSet& model, std::span<const ag::Var> vars,
                                  std::string_view prefix) {
  const std::string head = head_of(prefix);
  std::vector<ag::Var> out;
  for (std::size_t i : spec.param_layers()) {
    auto w = model.index_of(head + weight_name(i));
    FEDSAL_CHECK(w.has_value(), "model has no '" + head + weight_name(i) + "'");
    out.push_back(vars[*w]);
    if (spec.layers[i].bias) {
      auto b = model.index_of(head + bias_name(i));
      FEDSAL_CHECK(b.has_value(), "model has no '" + head + bias_name(i) + "'");
      out.push_back(vars[*b]);
    }
  }
  return out;
}

LocalTrainOptions train_options(const FederationConfig& cfg, std::size_t round, std::size_t client) {
  LocalTrainOptions o;
  o.epochs = cfg.local_epochs;
  o.batch_size = cfg.batch_size;
  o.lr = cfg.lr;
  o.seed = derive_seed(cfg.seed, 1, round, client);
  return o;
}

// c_l* = c_l - c_g + (w_g - w_e) / (steps * lr), over the names of c_g.
ParamSet next_control(const ParamSet& c_l, const ParamSet& c_g, const ParamSet& w_g, const ParamSet& w_e,
                      std::size_t steps, double lr) {
  FEDSAL_CHECK(steps > 0 && lr > 0.0, "control variate update needs steps > 0 and lr > 0");
  const double inv = 1.0 / (static_cast<double>(steps) * lr);
  ParamSet out = c_l;
  for (auto& p : out) {
    const auto cg = c_g.at(p.name).data();
    const auto wg = w_g.at(p.name).data();
    const auto we = w_e.at(p.name).data();
    auto d = p.value.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = d[i] - cg[i] + (wg[i] - we[i]) * inv;
  }
  return out;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix(master);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  return splitmix(h ^ c);
}

// ---- methods ---------------------------------------------------------------------

std::string_view method_name(Method m) {
  switch (m) {
    case Method::spatl: return "spatl";
    case Method::fedavg: return "fedavg";
    case Method::fedprox: return "fedprox";
    case Method::scaffold: return "scaffold";
    case Method::spatl_no_select: return "spatl-no-select";
    case Method::spatl_no_transfer: return "spatl-no-transfer";
    case Method::spatl_no_gradctl: return "spatl-no-gradctl";
  }
  throw ContractError("unknown method");
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::spatl, Method::fedavg, Method::fedprox, Method::scaffold, Method::spatl_no_select,
                   Method::spatl_no_transfer, Method::spatl_no_gradctl})
    if (method_name(m) == name) return m;
  throw ContractError("unknown method '" + std::string(name) +
                      "' (expected spatl, fedavg, fedprox, scaffold, spatl-no-select, spatl-no-transfer, "
                      "spatl-no-gradctl)");
}

bool is_spatl_family(Method m) {
  return m == Method::spatl || m == Method::spatl_no_select || m == Method::spatl_no_transfer ||
         m == Method::spatl_no_gradctl;
}

SpatlFlags flags_for(Method m) {
  SpatlFlags f;
  switch (m) {
    case Method::spatl: break;
    case Method::spatl_no_select: f.salient_selection = false; break;
    case Method::spatl_no_transfer: f.private_predictor = false; break;
    case Method::spatl_no_gradctl: f.gradient_control = false; break;
    default: f = {false, false, false}; break;
  }
  return f;
}

void FederationConfig::validate() const {
  FEDSAL_CHECK(n_clients >= 1, "n_clients must be >= 1");
  FEDSAL_CHECK(sample_ratio > 0.0 && sample_ratio <= 1.0, "sample_ratio must lie in (0, 1]");
  FEDSAL_CHECK(local_epochs >= 1, "local_epochs must be >= 1");
  FEDSAL_CHECK(lr > 0.0, "lr must be positive");
  FEDSAL_CHECK(server_lr > 0.0, "server_lr must be positive");
  FEDSAL_CHECK(prox_mu >= 0.0, "prox_mu must be >= 0");
  FEDSAL_CHECK(alpha > 0.0, "alpha must be positive");
  FEDSAL_CHECK(wire_bits == 32 || wire_bits == 64, "wire_bits must be 32 or 64");
  FEDSAL_CHECK(selection.flops_constraint > 0.0 && selection.flops_constraint <= 1.0,
               "flops_constraint must lie in (0, 1]");
  FEDSAL_CHECK(selection.finetune_episodes >= 1 && selection.search_episodes >= 1,
               "search episode counts must be >= 1");
  FEDSAL_CHECK(is_spatl_family(method) || (flags == SpatlFlags{false, false, false}),
               "salient-aggregation switches only apply to the spatl methods");
  selection.agent.validate();
}

std::size_t FederationConfig::sampled_per_round() const {
  const double k = std::ceil(sample_ratio * static_cast<double>(n_clients) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n_clients);
}

// ---- objectives ------------------------------------------------------------------

double LocalObjective::sub_accuracy(const Network&, const ParamSet&) const {
  throw ContractError("this objective does not support sub-model evaluation");
}

ClassificationObjective::ClassificationObjective(std::shared_ptr<const Dataset> data, NetworkSpec encoder,
                                                 NetworkSpec predictor, std::vector<std::size_t> train,
                                                 std::vector<std::size_t> val)
    : data_(std::move(data)),
      encoder_(std::move(encoder)),
      predictor_(std::move(predictor)),
      train_(std::move(train)),
      val_(std::move(val)) {
  FEDSAL_CHECK(data_ != nullptr, "objective needs a dataset");
  FEDSAL_CHECK(encoder_.output_shape() == predictor_.input_shape,
               "encoder output " + shape_str(encoder_.output_shape()) + " does not feed predictor input " +
                   shape_str(predictor_.input_shape));
  for (auto r : train_) FEDSAL_CHECK(r < data_->size(), "training row out of range");
  for (auto r : val_) FEDSAL_CHECK(r < data_->size(), "validation row out of range");
}

ValueAndGrad ClassificationObjective::loss_and_grad(const ParamSet& model, std::span<const std::size_t> batch) const {
  FEDSAL_CHECK(!batch.empty(), "empty minibatch");
  std::vector<std::size_t> rows(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    FEDSAL_CHECK(batch[i] < train_.size(), "minibatch index out of range");
    rows[i] = train_[batch[i]];
  }
  const Tensor x = data_->batch(rows);
  const std::vector<int> y = data_->batch_labels(rows);
  LossFn fn = [&](ag::Tape& tape, std::span<const ag::Var> vars) {
    const auto enc = network_vars(encoder_, model, vars, kEncoderPrefix);
    const auto pred = network_vars(predictor_, model, vars, kPredictorPrefix);
    ag::Var e = forward(tape, encoder_, enc, tape.constant(x));
    return ag::softmax_cross_entropy(forward(tape, predictor_, pred, e), y);
  };
  return value_and_grad(fn, model);
}

double ClassificationObjective::accuracy(const ParamSet& model) const {
  Network enc{encoder_, unprefixed(model, kEncoderPrefix)};
  return sub_accuracy(enc, model);
}

double ClassificationObjective::sub_accuracy(const Network& sub_encoder, const ParamSet& model) const {
  Network pred{predictor_, unprefixed(model, kPredictorPrefix)};
  const auto& rows = val_.empty() ? train_ : val_;
  FEDSAL_CHECK(!rows.empty(), "client has no rows to evaluate on");
  return evaluate(sub_encoder, pred, *data_, rows);
}

// ---- local computation -----------------------------------------------------------

LocalTrainResult local_sgd(const LocalObjective& objective, ParamSet model, const LocalTrainOptions& opts,
                           const ParamSet* correction, double prox_mu, const ParamSet* prox_anchor) {
  const std::size_t n = objective.train_size();
  if (n == 0) throw EmptyClientError("client has no training samples");
  FEDSAL_CHECK(opts.lr > 0.0, "local learning rate must be positive");
  FEDSAL_CHECK(opts.epochs >= 1, "local epochs must be >= 1");
  FEDSAL_CHECK(prox_mu >= 0.0, "proximal coefficient must be >= 0");
  FEDSAL_CHECK(prox_mu == 0.0 || prox_anchor != nullptr, "proximal term needs an anchor");
  const std::size_t bs = opts.batch_size == 0 ? n : std::min(opts.batch_size, n);
  const std::string trainable = opts.trainable_prefix.empty() ? std::string() : head_of(opts.trainable_prefix);

  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  LocalTrainResult res;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    if (bs < n) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t len = std::min(bs, n - start);
      ValueAndGrad vg = objective.loss_and_grad(model, std::span(order).subspan(start, len));
      for (std::size_t i = 0; i < model.size(); ++i) {
        Param& p = model[i];
        if (!trainable.empty() && !p.name.starts_with(trainable)) continue;
        auto w = p.value.data();
        const auto g = vg.grad.at(p.name).data();
        const double* corr = nullptr;
        if (correction != nullptr) {
          if (auto ci = correction->index_of(p.name)) corr = (*correction)[*ci].value.raw();
        }
        const double* anchor = prox_mu > 0.0 ? prox_anchor->at(p.name).raw() : nullptr;
        for (std::size_t j = 0; j < w.size(); ++j) {
          double step = g[j];
          if (corr != nullptr) step += corr[j];
          if (anchor != nullptr) step += prox_mu * (w[j] - anchor[j]);
          w[j] -= opts.lr * step;
        }
        if (!p.value.all_finite()) throw NumericError("local update produced non-finite '" + p.name + "'");
      }
      res.last_loss = vg.value;
      ++res.steps;
    }
  }
  res.model = std::move(model);
  return res;
}

SpatlLocalResult local_update_spatl(const ClientState& client, const ServerState& server,
                                    const LocalTrainOptions& opts, bool gradient_control) {
  FEDSAL_CHECK(client.objective != nullptr, "client has no objective");
  FEDSAL_CHECK(opts.lr > 0.0, "local learning rate must be positive");
  const ParamSet start = concat(server.global, client.predictor);

  ParamSet correction;
  if (gradient_control) {
    FEDSAL_CHECK(!server.c_g.empty(), "gradient control needs a global control variate");
    FEDSAL_CHECK(server.c_g.same_layout(client.c_l), "local and global control variates differ in layout");
    correction = axpy(server.c_g, -1.0, client.c_l);
  }
  LocalTrainResult tr = local_sgd(*client.objective, start, opts, gradient_control ? &correction : nullptr);

  SpatlLocalResult res;
  res.steps = tr.steps;
  if (gradient_control) {
    res.new_c_l = next_control(client.c_l, server.c_g, server.global, tr.model, tr.steps, opts.lr);
    res.delta_c = axpy(res.new_c_l, -1.0, client.c_l);
  }
  res.model = std::move(tr.model);
  return res;
}

LocalOutcome local_update_baseline(const ClientState& client, const ServerState& server, Method method,
                                   const LocalTrainOptions& opts, double prox_mu, int wire_bits) {
  FEDSAL_CHECK(!is_spatl_family(method), "local_update_baseline handles fedavg, fedprox and scaffold");
  FEDSAL_CHECK(client.objective != nullptr, "client has no objective");
  FEDSAL_CHECK(client.predictor.empty(), "baselines share the whole model");
  const ParamSet& w_g = server.global;

  LocalOutcome out;
  out.next = client;
  LocalTrainResult tr;
  if (method == Method::fedavg) {
    tr = local_sgd(*client.objective, w_g, opts);
  } else if (method == Method::fedprox) {
    tr = local_sgd(*client.objective, w_g, opts, nullptr, prox_mu, &w_g);
  } else {
    FEDSAL_CHECK(w_g.same_layout(server.c_g) && w_g.same_layout(client.c_l),
                 "scaffold control variates must match the model layout");
    const ParamSet correction = axpy(server.c_g, -1.0, client.c_l);
    tr = local_sgd(*client.objective, w_g, opts, &correction);
    out.next.c_l = next_control(client.c_l, server.c_g, w_g, tr.model, tr.steps, opts.lr);
    out.update.control_delta = full_slices(axpy(out.next.c_l, -1.0, client.c_l));
  }

  ClientUpdate& u = out.update;
  u.client_id = client.id;
  u.weights = full_slices(tr.model);
  u.meta.client_id = client.id;
  u.meta.bytes_up = param_bytes(u.weights, wire_bits);
  u.meta.bytes_down = param_bytes(w_g, wire_bits);
  if (method == Method::scaffold) {
    u.meta.ctrl_bytes_up = param_bytes(u.control_delta, wire_bits);
    u.meta.ctrl_bytes_down = param_bytes(server.c_g, wire_bits);
  }
  u.meta.accuracy = client.objective->accuracy(tr.model);
  if (const NetworkSpec* spec = client.objective->encoder_spec()) {
    u.selection = full_selection(*spec);
    u.meta.flops = u.meta.full_flops = count_flops(*spec);
    u.meta.sparsity = ratios(u.selection);
  }
  out.local_model = std::move(tr.model);
  return out;
}

LocalOutcome client_round(const ClientState& client, const ServerState& server, const FederationConfig& cfg,
                          std::size_t round) {
  const LocalTrainOptions opts = train_options(cfg, round, client.id);
  if (!is_spatl_family(cfg.method))
    return local_update_baseline(client, server, cfg.method, opts, cfg.prox_mu, cfg.wire_bits);

  const SpatlFlags& f = cfg.flags;
  SpatlLocalResult local = local_update_spatl(client, server, opts, f.gradient_control);

  LocalOutcome out;
  out.next = client;
  ClientUpdate& u = out.update;
  u.client_id = client.id;
  u.meta.client_id = client.id;

  const NetworkSpec* spec = client.objective->encoder_spec();
  ParamSet shared_enc = keep_prefix(local.model, kEncoderPrefix);
  if (spec != nullptr) {
    Network enc{*spec, unprefixed(local.model, kEncoderPrefix)};
    SalientSelection sel = full_selection(*spec);
    if (f.salient_selection) {
      FEDSAL_CHECK(out.next.agent.has_value(), "salient selection needs a pruning agent on every client");
      const bool tune = round <= cfg.selection.finetune_rounds;
      SearchOptions so;
      so.max_flops_ratio = cfg.selection.flops_constraint;
      so.episodes = tune ? cfg.selection.finetune_episodes : cfg.selection.search_episodes;
      so.update_policy = tune;
      so.head_only = true;
      so.seed = derive_seed(cfg.seed, 2, round, client.id);
      const ParamSet& model = local.model;
      const LocalObjective& obj = *client.objective;
      SearchResult sr =
          rl_search(*out.next.agent, enc, [&](const Network& sub) { return obj.sub_accuracy(sub, model); }, so);
      sel = std::move(sr.best);
    }
    u.weights = slice_encoder(enc.params, *spec, sel, kEncoderPrefix);
    u.meta.full_flops = count_flops(*spec);
    u.meta.flops = count_flops(apply_selection(enc, sel).spec);
    u.meta.sparsity = ratios(sel);
    u.selection = std::move(sel);
  } else {
    FEDSAL_CHECK(!f.salient_selection, "salient selection needs an encoder architecture");
    u.weights = full_slices(shared_enc);
  }
  if (!f.private_predictor) {
    for (auto& s : full_slices(keep_prefix(local.model, kPredictorPrefix)).slices) u.weights.slices.push_back(s);
  } else {
    for (const auto& s : u.weights.slices)
      FEDSAL_CHECK(!s.name.starts_with(head_of(kPredictorPrefix)), "private head must not leave the client");
  }
  if (f.gradient_control) {
    SlicedParams pattern;
    for (const auto& s : u.weights.slices)
      if (local.delta_c.contains(s.name)) pattern.slices.push_back(s);
    u.control_delta = restrict_like(local.delta_c, pattern);
    u.meta.ctrl_bytes_up = param_bytes(u.control_delta, cfg.wire_bits);
    u.meta.ctrl_bytes_down = param_bytes(server.c_g, cfg.wire_bits);
    // c_l* is committed only on the rows whose delta reaches the server, so
    // c_g keeps tracking the mean of the local variates.
    out.next.c_l = restrict_like(local.new_c_l, pattern).scatter_into(client.c_l);
  }
  u.meta.bytes_up = param_bytes(u.weights, cfg.wire_bits);
  u.meta.bytes_down = param_bytes(server.global, cfg.wire_bits);
  u.meta.accuracy = client.objective->accuracy(local.model);
  if (f.private_predictor) out.next.predictor = keep_prefix(local.model, kPredictorPrefix);
  out.local_model = std::move(local.model);
  return out;
}

ParamSet predictor_finetune(const LocalObjective& objective, const ParamSet& encoder, const ParamSet& predictor,
                            const LocalTrainOptions& opts) {
  FEDSAL_CHECK(opts.epochs >= 1, "predictor fine-tuning needs at least one epoch");
  LocalTrainOptions o = opts;
  o.trainable_prefix = kPredictorPrefix;
  LocalTrainResult tr = local_sgd(objective, concat(encoder, predictor), o);
  return keep_prefix(tr.model, kPredictorPrefix);
}

// ---- server ----------------------------------------------------------------------

ParamSet aggregate_salient(const ParamSet& w_g, std::span<const SlicedParams> updates, double server_lr,
                           AggregationNorm norm) {
  FEDSAL_CHECK(server_lr > 0.0, "server learning rate must be positive");
  if (updates.empty()) return w_g;
  std::vector<std::vector<double>> sum(w_g.size());
  std::vector<std::vector<std::size_t>> count(w_g.size());
  for (std::size_t i = 0; i < w_g.size(); ++i) {
    sum[i].assign(w_g[i].value.numel(), 0.0);
    count[i].assign(row_count(w_g[i].value), 0);
  }
  for (const SlicedParams& up : updates) {
    for (const RowSlice& s : up.slices) {
      const auto idx = w_g.index_of(s.name);
      FEDSAL_CHECK(idx.has_value(), "update carries unknown tensor '" + s.name + "'");
      const Tensor& base = w_g[*idx].value;
      const std::size_t rows = row_count(base);
      const std::size_t width = base.numel() / rows;
      FEDSAL_CHECK(s.values.numel() == s.rows.size() * width, "slice '" + s.name + "' has inconsistent extent");
      for (std::size_t r = 0; r < s.rows.size(); ++r) {
        const std::size_t row = s.rows[r];
        FEDSAL_CHECK(row < rows, "slice '" + s.name + "' row out of range");
        FEDSAL_CHECK(r == 0 || s.rows[r - 1] < row, "slice '" + s.name + "' rows must be strictly increasing");
        for (std::size_t j = 0; j < width; ++j)
          sum[*idx][row * width + j] += s.values[r * width + j] - base[row * width + j];
        ++count[*idx][row];
      }
    }
  }
  ParamSet out = w_g;
  const double k = static_cast<double>(updates.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto d = out[i].value.data();
    const std::size_t width = d.size() / count[i].size();
    for (std::size_t row = 0; row < count[i].size(); ++row) {
      if (count[i][row] == 0) continue;
      const double denom = norm == AggregationNorm::uniform ? k : static_cast<double>(count[i][row]);
      for (std::size_t j = 0; j < width; ++j) d[row * width + j] += server_lr * sum[i][row * width + j] / denom;
    }
  }
  return out;
}

ParamSet aggregate_salient(const ParamSet& w_g, std::span<const ClientUpdate> updates, double server_lr,
                           AggregationNorm norm) {
  std::vector<const ClientUpdate*> order;
  for (const auto& u : updates) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(),
                   [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  std::vector<SlicedParams> weights;
  for (const auto* u : order) weights.push_back(u->weights);
  return aggregate_salient(w_g, weights, server_lr, norm);
}

ParamSet update_global_control(const ParamSet& c_g, std::span<const SlicedParams> deltas, std::size_t n_clients) {
  FEDSAL_CHECK(n_clients > 0, "global control update needs at least one registered client");
  ParamSet out = c_g;
  const double inv = 1.0 / static_cast<double>(n_clients);
  for (const SlicedParams& d : deltas) {
    for (const RowSlice& s : d.slices) {
      Tensor& dst = out.at(s.name);
      const std::size_t rows = row_count(dst);
      const std::size_t width = dst.numel() / rows;
      FEDSAL_CHECK(s.values.numel() == s.rows.size() * width, "slice '" + s.name + "' has inconsistent extent");
      for (std::size_t r = 0; r < s.rows.size(); ++r) {
        FEDSAL_CHECK(s.rows[r] < rows, "slice '" + s.name + "' row out of range");
        for (std::size_t j = 0; j < width; ++j) dst[s.rows[r] * width + j] += inv * s.values[r * width + j];
      }
    }
  }
  return out;
}

// ---- rounds ----------------------------------------------------------------------

ServerState init_server(const ParamSet& joined_model, const FederationConfig& cfg) {
  cfg.validate();
  ServerState s;
  s.n_clients = cfg.n_clients;
  const bool spatl = is_spatl_family(cfg.method);
  s.global = spatl && cfg.flags.private_predictor ? drop_prefix(joined_model, kPredictorPrefix) : joined_model;
  if (spatl && cfg.flags.gradient_control) s.c_g = keep_prefix(joined_model, kEncoderPrefix).zeros_like();
  if (cfg.method == Method::scaffold) s.c_g = joined_model.zeros_like();
  return s;
}

ClientState init_client(std::size_t id, std::shared_ptr<const LocalObjective> objective,
                        const ParamSet& joined_model, const ServerState& server, const FederationConfig& cfg,
                        std::optional<Agent> agent) {
  FEDSAL_CHECK(id < cfg.n_clients, "client id out of range");
  ClientState c;
  c.id = id;
  c.objective = std::move(objective);
  if (is_spatl_family(cfg.method) && cfg.flags.private_predictor)
    c.predictor = keep_prefix(joined_model, kPredictorPrefix);
  c.c_l = server.c_g.zeros_like();
  c.agent = std::move(agent);
  return c;
}

std::vector<std::size_t> sample_clients(const FederationConfig& cfg, std::size_t round) {
  const std::size_t k = cfg.sampled_per_round();
  std::vector<std::size_t> out;
  if (cfg.sampling == Sampling::cyclic) {
    FEDSAL_CHECK(round >= 1, "rounds are numbered from 1");
    for (std::size_t i = 0; i < k; ++i) out.push_back(((round - 1) * k + i) % cfg.n_clients);
  } else {
    std::vector<std::size_t> all(cfg.n_clients);
    std::iota(all.begin(), all.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, 3, round));
    std::shuffle(all.begin(), all.end(), rng);
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

RoundOutcome run_round(const ServerState& server, std::vector<ClientState>& clients, const FederationConfig& cfg) {
  FEDSAL_CHECK(clients.size() == cfg.n_clients, "client list does not match n_clients");
  RoundOutcome out;
  const std::size_t round = server.round + 1;
  out.report.round = round;
  const std::vector<std::size_t> sampled = sample_clients(cfg, round);

  std::vector<ClientState> next;
  for (std::size_t id : sampled) {
    FEDSAL_CHECK(clients[id].id == id, "client list must be indexed by client id");
    // Clients without training data sit out; the caller reports them.
    if (clients[id].objective->train_size() == 0) continue;
    LocalOutcome lo = client_round(clients[id], server, cfg, round);
    out.report.sampled.push_back(id);
    out.report.clients.push_back(lo.update.meta);
    out.updates.push_back(std::move(lo.update));
    next.push_back(std::move(lo.next));
  }

  out.server = server;
  out.server.round = round;
  out.server.global = aggregate_salient(server.global, out.updates, cfg.server_lr, cfg.aggregation);
  if (!server.c_g.empty()) {
    std::vector<SlicedParams> deltas;
    for (const auto& u : out.updates) deltas.push_back(u.control_delta);
    out.server.c_g = update_global_control(server.c_g, deltas, server.n_clients);
  }
  for (auto& c : next) clients[c.id] = std::move(c);
  return out;
}

}  // namespace fedsal
