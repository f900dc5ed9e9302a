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

#include "fedsal/experiment.h"

#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "fedsal/agent.h"
#include "fedsal/data.h"
#include "fedsal/error.h"
#include "fedsal/flops.h"
#include "fedsal/selection.h"

namespace fedsal {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported by name.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ParseError("field '" + label() + "' must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    seen_.insert(key);
    read(*it, full(key), out);
  }

  std::optional<Fields> sub(const std::string& key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return std::nullopt;
    seen_.insert(key);
    return Fields(*it, full(key));
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.contains(it.key())) throw ParseError("unknown field '" + full(it.key()) + "'");
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }
  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static void read(const json& v, const std::string& name, double& out) {
    if (!v.is_number()) throw ParseError("field '" + name + "' must be a number");
    out = v.get<double>();
  }
  static void read(const json& v, const std::string& name, std::size_t& out) {
    if (!v.is_number_unsigned()) throw ParseError("field '" + name + "' must be a non-negative integer");
    out = v.get<std::size_t>();
  }
  static void read(const json& v, const std::string& name, int& out) {
    if (!v.is_number_integer()) throw ParseError("field '" + name + "' must be an integer");
    out = v.get<int>();
  }
  static void read(const json& v, const std::string& name, bool& out) {
    if (!v.is_boolean()) throw ParseError("field '" + name + "' must be true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& name, std::string& out) {
    if (!v.is_string()) throw ParseError("field '" + name + "' must be a string");
    out = v.get<std::string>();
  }
  static void read(const json& v, const std::string& name, std::filesystem::path& out) {
    std::string s;
    read(v, name, s);
    out = s;
  }
  static void read(const json& v, const std::string& name, std::vector<std::size_t>& out) {
    if (!v.is_array()) throw ParseError("field '" + name + "' must be an array of non-negative integers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::size_t x = 0;
      read(v[i], name + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string_view sampling_name(Sampling s) { return s == Sampling::cyclic ? "cyclic" : "uniform"; }
std::string_view norm_name(AggregationNorm n) { return n == AggregationNorm::coverage ? "coverage" : "uniform"; }

std::string fmt_double(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

// ---- config ----------------------------------------------------------------------

void ExperimentConfig::validate() const {
  fed.validate();
  FEDSAL_CHECK(fed.rounds >= 1, "federation.rounds must be >= 1");
  FEDSAL_CHECK(data.source == "synthetic" || data.source == "csv", "data.source must be 'synthetic' or 'csv'");
  FEDSAL_CHECK(data.source != "csv" || !data.csv_path.empty(), "data.csv_path is required for csv data");
  FEDSAL_CHECK(data.classes >= 2, "data.classes must be >= 2");
  FEDSAL_CHECK(data.samples >= static_cast<std::size_t>(data.classes), "data.samples must be >= data.classes");
  FEDSAL_CHECK(data.val_fraction > 0.0 && data.val_fraction < 1.0, "data.val_fraction must lie in (0, 1)");
  FEDSAL_CHECK(model.arch == "cnn" || model.arch == "mlp", "model.arch must be 'cnn' or 'mlp'");
  FEDSAL_CHECK(!model.widths.empty(), "model.widths must not be empty");
  for (auto w : model.widths) FEDSAL_CHECK(w >= 1, "model.widths entries must be >= 1");
  FEDSAL_CHECK(model.embedding >= 1, "model.embedding must be >= 1");
  FEDSAL_CHECK(pretrain.reference_samples >= static_cast<std::size_t>(data.classes),
               "pretrain.reference_samples must be >= data.classes");
  FEDSAL_CHECK(transfer.clients == 0 || transfer.epochs >= 1, "transfer.epochs must be >= 1");
  FEDSAL_CHECK(target_accuracy > 0.0 && target_accuracy <= 1.0, "target_accuracy must lie in (0, 1]");
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  Fields root(doc, "");
  root.get("name", cfg.name);
  root.get("seed", cfg.fed.seed);
  root.get("out_dir", cfg.out_dir);
  root.get("target_accuracy", cfg.target_accuracy);

  if (auto f = root.sub("federation")) {
    std::string method(method_name(cfg.fed.method)), sampling("uniform"), aggregation("uniform");
    f->get("method", method);
    try {
      cfg.fed.set_method(parse_method(method));
    } catch (const ContractError& e) {
      throw ParseError("field 'federation.method': " + std::string(e.what()));
    }
    f->get("n_clients", cfg.fed.n_clients);
    f->get("sample_ratio", cfg.fed.sample_ratio);
    f->get("rounds", cfg.fed.rounds);
    f->get("local_epochs", cfg.fed.local_epochs);
    f->get("batch_size", cfg.fed.batch_size);
    f->get("lr", cfg.fed.lr);
    f->get("server_lr", cfg.fed.server_lr);
    f->get("prox_mu", cfg.fed.prox_mu);
    f->get("alpha", cfg.fed.alpha);
    f->get("wire_bits", cfg.fed.wire_bits);
    f->get("sampling", sampling);
    f->get("aggregation", aggregation);
    if (sampling != "uniform" && sampling != "cyclic")
      throw ParseError("field 'federation.sampling' must be 'uniform' or 'cyclic'");
    if (aggregation != "uniform" && aggregation != "coverage")
      throw ParseError("field 'federation.aggregation' must be 'uniform' or 'coverage'");
    cfg.fed.sampling = sampling == "cyclic" ? Sampling::cyclic : Sampling::uniform;
    cfg.fed.aggregation = aggregation == "coverage" ? AggregationNorm::coverage : AggregationNorm::uniform;
    f->finish();
  }
  if (auto f = root.sub("data")) {
    f->get("source", cfg.data.source);
    f->get("csv_path", cfg.data.csv_path);
    f->get("samples", cfg.data.samples);
    std::vector<std::size_t> shape(cfg.data.sample_shape.begin(), cfg.data.sample_shape.end());
    f->get("sample_shape", shape);
    cfg.data.sample_shape = Shape(shape.begin(), shape.end());
    f->get("classes", cfg.data.classes);
    f->get("margin", cfg.data.margin);
    f->get("val_fraction", cfg.data.val_fraction);
    f->finish();
  }
  if (auto f = root.sub("model")) {
    f->get("arch", cfg.model.arch);
    f->get("widths", cfg.model.widths);
    f->get("embedding", cfg.model.embedding);
    f->finish();
  }
  if (auto f = root.sub("selection")) {
    SelectionConfig& s = cfg.fed.selection;
    f->get("flops_constraint", s.flops_constraint);
    f->get("finetune_rounds", s.finetune_rounds);
    f->get("finetune_episodes", s.finetune_episodes);
    f->get("search_episodes", s.search_episodes);
    f->get("pretrain_episodes", cfg.pretrain.episodes);
    f->get("reference_samples", cfg.pretrain.reference_samples);
    f->get("reference_epochs", cfg.pretrain.reference_epochs);
    f->finish();
  }
  if (auto f = root.sub("agent")) {
    AgentConfig& a = cfg.fed.selection.agent;
    f->get("gamma", a.gamma);
    f->get("clip", a.clip);
    f->get("lr", a.lr);
    f->get("beta1", a.beta1);
    f->get("beta2", a.beta2);
    f->get("adam_eps", a.adam_eps);
    f->get("sigma", a.sigma);
    f->get("a_max", a.a_max);
    f->get("hidden", a.hidden);
    f->get("batch_size", a.batch_size);
    f->get("ppo_epochs", a.ppo_epochs);
    f->get("value_coef", a.value_coef);
    f->get("baseline_momentum", a.baseline_momentum);
    f->finish();
  }
  if (auto f = root.sub("transfer")) {
    f->get("clients", cfg.transfer.clients);
    f->get("epochs", cfg.transfer.epochs);
    f->finish();
  }
  root.finish();
  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw ParseError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const ExperimentConfig& cfg) {
  const FederationConfig& f = cfg.fed;
  const SelectionConfig& s = f.selection;
  const AgentConfig& a = s.agent;
  json j;
  j["name"] = cfg.name;
  j["seed"] = f.seed;
  j["out_dir"] = cfg.out_dir.string();
  j["target_accuracy"] = cfg.target_accuracy;
  j["federation"] = {{"method", method_name(f.method)},
                     {"n_clients", f.n_clients},
                     {"sample_ratio", f.sample_ratio},
                     {"rounds", f.rounds},
                     {"local_epochs", f.local_epochs},
                     {"batch_size", f.batch_size},
                     {"lr", f.lr},
                     {"server_lr", f.server_lr},
                     {"prox_mu", f.prox_mu},
                     {"alpha", f.alpha},
                     {"wire_bits", f.wire_bits},
                     {"sampling", sampling_name(f.sampling)},
                     {"aggregation", norm_name(f.aggregation)}};
  j["data"] = {{"source", cfg.data.source},
               {"csv_path", cfg.data.csv_path.string()},
               {"samples", cfg.data.samples},
               {"sample_shape", std::vector<std::size_t>(cfg.data.sample_shape.begin(), cfg.data.sample_shape.end())},
               {"classes", cfg.data.classes},
               {"margin", cfg.data.margin},
               {"val_fraction", cfg.data.val_fraction}};
  j["model"] = {{"arch", cfg.model.arch}, {"widths", cfg.model.widths}, {"embedding", cfg.model.embedding}};
  j["selection"] = {{"flops_constraint", s.flops_constraint},
                    {"finetune_rounds", s.finetune_rounds},
                    {"finetune_episodes", s.finetune_episodes},
                    {"search_episodes", s.search_episodes},
                    {"pretrain_episodes", cfg.pretrain.episodes},
                    {"reference_samples", cfg.pretrain.reference_samples},
                    {"reference_epochs", cfg.pretrain.reference_epochs}};
  j["agent"] = {{"gamma", a.gamma},         {"clip", a.clip},
                {"lr", a.lr},               {"beta1", a.beta1},
                {"beta2", a.beta2},         {"adam_eps", a.adam_eps},
                {"sigma", a.sigma},
                {"a_max", a.a_max},         {"hidden", a.hidden},
                {"batch_size", a.batch_size}, {"ppo_epochs", a.ppo_epochs},
                {"value_coef", a.value_coef}, {"baseline_momentum", a.baseline_momentum}};
  j["transfer"] = {{"clients", cfg.transfer.clients}, {"epochs", cfg.transfer.epochs}};
  return j;
}

// ---- presets ---------------------------------------------------------------------

std::vector<std::string> preset_names() {
  return {"default",          "spatl",           "fedavg",           "fedprox",       "scaffold",
          "ablation-no-select", "ablation-no-transfer", "ablation-no-gradctl", "transfer-eval"};
}

ExperimentConfig preset(std::string_view name) {
  // Desk-scale defaults shared by every preset.
  ExperimentConfig cfg;
  cfg.fed.n_clients = 10;
  cfg.fed.rounds = 50;
  cfg.fed.local_epochs = 2;
  cfg.fed.batch_size = 32;
  cfg.fed.lr = 0.05;
  cfg.fed.alpha = 0.1;
  cfg.target_accuracy = 0.8;

  Method m = Method::spatl;
  if (name == "default" || name == "spatl") m = Method::spatl;
  else if (name == "fedavg") m = Method::fedavg;
  else if (name == "fedprox") m = Method::fedprox;
  else if (name == "scaffold") m = Method::scaffold;
  else if (name == "ablation-no-select") m = Method::spatl_no_select;
  else if (name == "ablation-no-transfer") m = Method::spatl_no_transfer;
  else if (name == "ablation-no-gradctl") m = Method::spatl_no_gradctl;
  else if (name == "transfer-eval") cfg.transfer.clients = 2;
  else throw ContractError("unknown preset '" + std::string(name) + "'");
  cfg.fed.set_method(m);
  cfg.name = name == "default" ? "spatl" : std::string(name);
  cfg.out_dir = std::filesystem::path("runs") / cfg.name;
  return cfg;
}

// ---- model -----------------------------------------------------------------------

Model build_model(const ModelConfig& mc, const Shape& sample_shape, int classes, std::uint64_t seed) {
  NetworkSpec enc;
  enc.input_shape = sample_shape;
  if (mc.arch == "cnn") {
    FEDSAL_CHECK(sample_shape.size() == 3, "cnn models need [C, H, W] samples, got " + shape_str(sample_shape));
    std::size_t in = sample_shape[0];
    for (std::size_t i = 0; i < mc.widths.size(); ++i) {
      enc.layers.push_back(LayerSpec::conv2d(in, mc.widths[i], 3, i == 0 ? 1 : 2, 1));
      enc.layers.push_back(LayerSpec::relu());
      in = mc.widths[i];
    }
    enc.layers.push_back(LayerSpec::flatten());
  } else {
    FEDSAL_CHECK(mc.arch == "mlp", "unknown architecture '" + mc.arch + "'");
    if (sample_shape.size() != 1) enc.layers.push_back(LayerSpec::flatten());
    std::size_t in = numel(sample_shape);
    for (std::size_t w : mc.widths) {
      enc.layers.push_back(LayerSpec::linear(in, w));
      enc.layers.push_back(LayerSpec::relu());
      in = w;
    }
  }
  const std::size_t flat = numel(enc.output_shape());
  enc.layers.push_back(LayerSpec::linear(flat, mc.embedding));

  NetworkSpec pred;
  pred.input_shape = {mc.embedding};
  pred.layers.push_back(LayerSpec::linear(mc.embedding, static_cast<std::size_t>(classes)));
  return Model{init_network(enc, derive_seed(seed, 20, 0)), init_network(pred, derive_seed(seed, 20, 1))};
}

// ---- runs ------------------------------------------------------------------------

namespace {

Dataset load_data(const ExperimentConfig& cfg) {
  if (cfg.data.source == "csv") return load_csv(cfg.data.csv_path, cfg.data.sample_shape);
  return synth_classification(cfg.data.samples, cfg.data.sample_shape, cfg.data.classes, cfg.data.margin,
                              derive_seed(cfg.fed.seed, 30));
}

// Trains the reference encoder centrally and the policy on it.
Agent pretrain_agent(const ExperimentConfig& cfg, const Model& init, const Dataset& shape_like) {
  const auto groups = mask_groups(init.encoder.spec);
  Agent agent = Agent::create(groups.size(), cfg.fed.selection.agent, derive_seed(cfg.fed.seed, 40));
  if (cfg.pretrain.episodes == 0 || groups.empty()) return agent;

  auto ref = std::make_shared<Dataset>(
      synth_classification(cfg.pretrain.reference_samples, shape_like.sample_shape(), shape_like.num_classes,
                           cfg.data.margin, derive_seed(cfg.fed.seed, 41)));
  const std::size_t n_val = std::max<std::size_t>(1, ref->size() / 5);
  std::vector<std::size_t> train, val;
  for (std::size_t i = 0; i < ref->size(); ++i) (i < n_val ? val : train).push_back(i);
  ClassificationObjective obj(ref, init.encoder.spec, init.predictor.spec, train, val);

  LocalTrainOptions opts;
  opts.epochs = std::max<std::size_t>(1, cfg.pretrain.reference_epochs);
  opts.batch_size = cfg.fed.batch_size;
  opts.lr = cfg.fed.lr;
  opts.seed = derive_seed(cfg.fed.seed, 42);
  const ParamSet trained = local_sgd(obj, init.joined_params(), opts).model;

  Network enc{init.encoder.spec, unprefixed(trained, kEncoderPrefix)};
  SearchOptions so;
  so.max_flops_ratio = cfg.fed.selection.flops_constraint;
  so.episodes = cfg.pretrain.episodes;
  so.update_policy = true;
  so.head_only = false;
  so.seed = derive_seed(cfg.fed.seed, 43);
  rl_search(agent, enc, [&](const Network& sub) { return obj.sub_accuracy(sub, trained); }, so);
  return agent;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec || !std::filesystem::is_directory(cfg.out_dir))
    throw IoError("cannot create output directory '" + cfg.out_dir.string() + "'");

  auto data = std::make_shared<Dataset>(load_data(cfg));
  const std::size_t n_fed = cfg.fed.n_clients;
  const std::size_t n_total = n_fed + cfg.transfer.clients;
  const Partition part = dirichlet_partition(*data, n_total, cfg.fed.alpha, derive_seed(cfg.fed.seed, 31));

  Model init = build_model(cfg.model, data->sample_shape(), data->num_classes, cfg.fed.seed);
  const ParamSet joined = init.joined_params();
  const bool selecting = is_spatl_family(cfg.fed.method) && cfg.fed.flags.salient_selection;
  std::optional<Agent> agent;
  if (selecting) agent = pretrain_agent(cfg, init, *data);

  ExperimentResult res;
  ServerState server = init_server(joined, cfg.fed);
  std::vector<ClientState> clients;
  std::vector<LocalSplit> splits(n_total);
  for (std::size_t id = 0; id < n_total; ++id) {
    if (part.clients[id].empty()) {
      res.empty_clients.push_back(id);
    } else {
      splits[id] = split_local(part, id, cfg.data.val_fraction, derive_seed(cfg.fed.seed, 32, id));
    }
    if (id >= n_fed) continue;
    auto obj = std::make_shared<ClassificationObjective>(data, init.encoder.spec, init.predictor.spec,
                                                         splits[id].train, splits[id].val);
    clients.push_back(init_client(id, obj, joined, server, cfg.fed, agent));
  }

  std::ostringstream csv;
  write_rounds_csv_header(csv);
  for (std::size_t r = 0; r < cfg.fed.rounds; ++r) {
    RoundOutcome out = run_round(server, clients, cfg.fed);
    server = std::move(out.server);
    append_rounds_csv(csv, out.report);
    res.ledger.add(out.report);
    res.reports.push_back(std::move(out.report));
  }
  write_text(cfg.out_dir / "rounds.csv", csv.str());

  const auto& acc = res.ledger.mean_accuracy();
  res.final_accuracy = acc.empty() ? 0.0 : acc.back();
  res.rounds_to_target = rounds_to_target(res.ledger, cfg.target_accuracy);
  res.bytes_up_to_target = res.rounds_to_target ? res.ledger.cumulative_bytes_up()[*res.rounds_to_target - 1]
                                                : res.ledger.total_bytes_up();
  std::size_t participations = 0;
  for (const auto& rep : res.reports) participations += rep.clients.size();
  res.round_client_bytes =
      participations == 0 ? 0.0 : static_cast<double>(res.ledger.total_bytes_up()) / participations;

  // Held-out clients receive the trained encoder and fit a fresh head locally.
  if (cfg.transfer.clients > 0) {
    const ParamSet encoder = [&] {
      ParamSet e;
      for (const auto& p : server.global)
        if (p.name.starts_with(std::string(kEncoderPrefix) + ".")) e.add(p.name, p.value);
      return e;
    }();
    const ParamSet fresh_head = prefixed(init.predictor.params, kPredictorPrefix);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t id = n_fed; id < n_total; ++id) {
      if (splits[id].train.empty()) continue;
      ClassificationObjective obj(data, init.encoder.spec, init.predictor.spec, splits[id].train, splits[id].val);
      LocalTrainOptions o;
      o.epochs = cfg.transfer.epochs;
      o.batch_size = cfg.fed.batch_size;
      o.lr = cfg.fed.lr;
      o.seed = derive_seed(cfg.fed.seed, 50, id);
      const ParamSet head = predictor_finetune(obj, encoder, fresh_head, o);
      sum += obj.accuracy(concat(encoder, head));
      ++n;
    }
    if (n > 0) res.transfer_accuracy = sum / static_cast<double>(n);
  }

  json s;
  s["name"] = cfg.name;
  s["method"] = method_name(cfg.fed.method);
  s["seed"] = cfg.fed.seed;
  s["rounds"] = res.ledger.rounds();
  s["n_clients"] = cfg.fed.n_clients;
  s["final_mean_accuracy"] = res.final_accuracy;
  s["target_accuracy"] = cfg.target_accuracy;
  s["rounds_to_target"] = res.rounds_to_target ? json(*res.rounds_to_target) : json(nullptr);
  s["total_bytes_up"] = res.ledger.total_bytes_up();
  s["total_bytes_down"] = res.ledger.total_bytes_down();
  s["total_ctrl_bytes"] = res.ledger.total_ctrl_bytes();
  s["bytes_up_to_target"] = res.bytes_up_to_target;
  s["round_client_bytes"] = res.round_client_bytes;
  s["mean_flops_reduction"] = res.ledger.mean_flops_reduction();
  s["empty_clients"] = res.empty_clients;
  s["transfer_accuracy"] = res.transfer_accuracy ? json(*res.transfer_accuracy) : json(nullptr);
  s["config"] = to_json(cfg);
  res.summary = s;
  write_text(cfg.out_dir / "summary.json", s.dump(2) + "\n");
  return res;
}

// ---- comparison ------------------------------------------------------------------

std::vector<ComparisonRow> compare(std::span<const std::filesystem::path> run_dirs) {
  FEDSAL_CHECK(run_dirs.size() >= 2, "compare needs at least two run directories");
  std::vector<ComparisonRow> rows;
  for (const auto& dir : run_dirs) {
    const auto path = dir / "summary.json";
    std::ifstream in(path);
    if (!in) throw IoError("missing summary.json in '" + dir.string() + "'");
    json s;
    try {
      s = json::parse(in);
      ComparisonRow row;
      row.name = s.at("name").get<std::string>();
      row.method = s.at("method").get<std::string>();
      if (!s.at("rounds_to_target").is_null()) row.rounds_to_target = s.at("rounds_to_target").get<std::size_t>();
      row.round_client_bytes = s.at("round_client_bytes").get<double>();
      row.total_bytes = s.at("bytes_up_to_target").get<std::uint64_t>();
      rows.push_back(row);
    } catch (const json::exception& e) {
      throw ParseError("'" + path.string() + "': " + e.what());
    }
  }
  const auto base = static_cast<double>(rows.front().total_bytes);
  for (auto& r : rows) {
    r.delta_bytes = static_cast<std::int64_t>(r.total_bytes) - static_cast<std::int64_t>(rows.front().total_bytes);
    r.speedup = r.total_bytes == 0 ? 0.0 : base / static_cast<double>(r.total_bytes);
  }
  return rows;
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::string out = "name,method,rounds_to_target,round_client_bytes,total_bytes,delta_bytes,speedup\n";
  for (const auto& r : rows) {
    out += r.name + "," + r.method + "," + (r.rounds_to_target ? std::to_string(*r.rounds_to_target) : "none") +
           "," + fmt_double(r.round_client_bytes, "%.1f") + "," + std::to_string(r.total_bytes) + "," +
           std::to_string(r.delta_bytes) + "," + fmt_double(r.speedup, "%.2f") + "\n";
  }
  return out;
}

}  // namespace fedsal
