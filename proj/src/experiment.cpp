/* Copyright 2026 The exitlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "exitlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "exitlab/error.hpp"
#include "exitlab/report.hpp"

namespace exitlab {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<double> dense_tau_grid() {
  std::vector<double> taus;
  for (int i = 0; i <= 200; ++i) taus.push_back(i / 200.0);
  for (int i = 0; i < 120; ++i) taus.push_back(std::pow(10.0, -6.0 + 6.0 * i / 119.0));
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  return taus;
}

ExperimentConfig default_experiment() {
  ExperimentConfig cfg;
  // Center-only DAR lets the projection collapse onto one direction, which
  // leaves distance ratios uninformative; the benchmark uses the combined
  // form.
  cfg.train.dar.variant = DarVariant::kCombined;
  cfg.train.seed = cfg.data.seed;
  cfg.model.seed = cfg.data.seed;
  ExitPolicy edr;
  edr.kind = PolicyKind::kEdr;
  ExitPolicy ent;
  ent.kind = PolicyKind::kEntropy;
  ExitPolicy pat;
  pat.kind = PolicyKind::kPatience;
  ExitPolicy oracle;
  oracle.kind = PolicyKind::kOracle;
  cfg.policies = {edr, ent, pat, oracle};
  cfg.taus = default_tau_grid();
  cfg.match_taus = dense_tau_grid();
  cfg.lambdas = {0.667, 1.0, 1.5, 2.0, 3.0};
  return cfg;
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (data_dir.empty()) {
    data.validate();
    if (data.num_classes != model.num_classes || data.input_dim != model.input_dim) {
      throw ValidationError("config: data and model disagree on classes or input_dim");
    }
  }
  for (const auto& p : policies) p.validate(model.num_layers);
  auto finite_all = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (taus.empty() || !finite_all(taus)) throw ValidationError("config: taus must be non-empty and finite");
  if (!finite_all(match_taus)) throw ValidationError("config: match_taus must be finite");
  for (double l : lambdas) {
    if (!(l > 0.0) || !std::isfinite(l)) throw ValidationError("config: lambdas must be > 0");
  }
  for (double t : target_speedups) {
    if (!(t >= 1.0)) throw ValidationError("config: target speed-ups must be >= 1");
  }
  if (!(speedup_tolerance >= 0.0)) throw ValidationError("config: speedup_tolerance must be >= 0");
  if (!finite_all(histogram_taus) || !finite_all(diagnose_taus)) {
    throw ValidationError("config: histogram/diagnose taus must be finite");
  }
  for (int l : diagnose_layers) {
    if (l < 1 || l >= model.num_layers) {
      throw ValidationError("config: diagnose layers must lie in 1..M-1");
    }
  }
  if (!(shift.magnitude >= 0.0) || !std::isfinite(shift.magnitude)) {
    throw ValidationError("config: shift magnitude must be finite and >= 0");
  }
  if (!shift.vector.empty() && static_cast<int>(shift.vector.size()) != model.input_dim) {
    throw ValidationError("config: shift vector must have input_dim entries");
  }
  if (shift.kmeans_iters < 1) throw ValidationError("config: kmeans_iters must be >= 1");
  if (!(shift.target_speedup >= 1.0)) throw ValidationError("config: shift target must be >= 1");
  if (out_dir.empty()) throw ValidationError("config: out_dir must be set");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json policy_json(const ExitPolicy& p) {
  return {{"kind", std::string(to_string(p.kind))},
          {"tau", p.tau},
          {"lambda", p.lambda},
          {"patience", p.patience},
          {"fixed_layer", p.fixed_layer}};
}

void only_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ValidationError(std::string("config: ") + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ValidationError(std::string("config: unknown key '") + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

ExitPolicy policy_from_json(const json& j) {
  only_keys(j, {"kind", "tau", "lambda", "patience", "fixed_layer"}, "policies[]");
  ExitPolicy p;
  if (!j.contains("kind")) throw ValidationError("config: every policy needs a kind");
  p.kind = policy_kind_from_string(j.at("kind").get<std::string>());
  read(j, "tau", p.tau);
  read(j, "lambda", p.lambda);
  read(j, "patience", p.patience);
  read(j, "fixed_layer", p.fixed_layer);
  return p;
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = {{"num_layers", c.model.num_layers},
                {"num_classes", c.model.num_classes},
                {"input_dim", c.model.input_dim},
                {"hidden_dim", c.model.hidden_dim},
                {"proto_dim", c.model.proto_dim},
                {"activation", std::string(to_string(c.model.activation))},
                {"use_projection", c.model.use_projection},
                {"seed", c.model.seed}};
  j["train"] = {{"alpha", c.train.alpha},
                {"dar", {{"variant", std::string(to_string(c.train.dar.variant))},
                         {"beta", c.train.dar.beta}}},
                {"gamma", c.train.gamma},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"weight_decay", c.train.weight_decay},
                {"total_steps", c.train.total_steps},
                {"seed", c.train.seed},
                {"eval_every", c.train.eval_every}};
  j["data"] = {{"num_classes", c.data.num_classes},
               {"input_dim", c.data.input_dim},
               {"n_train", c.data.n_train},
               {"n_dev", c.data.n_dev},
               {"n_test", c.data.n_test},
               {"easy_fraction", c.data.easy_fraction},
               {"easy_margin", c.data.easy_margin},
               {"hard_margin", c.data.hard_margin},
               {"hard_offset", c.data.hard_offset},
               {"label_noise", c.data.label_noise},
               {"shift", c.data.shift},
               {"seed", c.data.seed}};
  j["data_dir"] = c.data_dir;
  j["policies"] = json::array();
  for (const auto& p : c.policies) j["policies"].push_back(policy_json(p));
  j["taus"] = c.taus;
  j["match_taus"] = c.match_taus;
  j["lambdas"] = c.lambdas;
  j["select_lambda"] = c.select_lambda;
  j["target_speedups"] = c.target_speedups;
  j["speedup_tolerance"] = c.speedup_tolerance;
  j["histogram_taus"] = c.histogram_taus;
  j["diagnose_layers"] = c.diagnose_layers;
  j["diagnose_taus"] = c.diagnose_taus;
  j["shift"] = {{"magnitude", c.shift.magnitude},
                {"vector", c.shift.vector},
                {"kmeans_iters", c.shift.kmeans_iters},
                {"kmeans_tol", c.shift.kmeans_tol},
                {"target_speedup", c.shift.target_speedup},
                {"adjust", c.shift.adjust}};
  j["out_dir"] = c.out_dir;
  return j;
}

ExperimentConfig experiment_from_json(const json& j, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  try {
    only_keys(j,
              {"model", "train", "data", "data_dir", "policies", "taus", "match_taus", "lambdas",
               "select_lambda", "target_speedups", "speedup_tolerance", "histogram_taus",
               "diagnose_layers", "diagnose_taus", "shift", "out_dir"},
              "top level");
    if (auto it = j.find("model"); it != j.end()) {
      const json& m = *it;
      only_keys(m,
                {"num_layers", "num_classes", "input_dim", "hidden_dim", "proto_dim", "activation",
                 "use_projection", "seed"},
                "model");
      read(m, "num_layers", c.model.num_layers);
      read(m, "num_classes", c.model.num_classes);
      read(m, "input_dim", c.model.input_dim);
      read(m, "hidden_dim", c.model.hidden_dim);
      read(m, "proto_dim", c.model.proto_dim);
      if (m.contains("activation")) {
        c.model.activation = activation_from_string(m.at("activation").get<std::string>());
      }
      read(m, "use_projection", c.model.use_projection);
      read(m, "seed", c.model.seed);
    }
    if (auto it = j.find("train"); it != j.end()) {
      const json& t = *it;
      only_keys(t,
                {"alpha", "dar", "gamma", "batch_size", "learning_rate", "weight_decay",
                 "total_steps", "seed", "eval_every"},
                "train");
      read(t, "alpha", c.train.alpha);
      if (auto d = t.find("dar"); d != t.end()) {
        only_keys(*d, {"variant", "beta"}, "train.dar");
        if (d->contains("variant")) {
          c.train.dar.variant = dar_variant_from_string(d->at("variant").get<std::string>());
        }
        read(*d, "beta", c.train.dar.beta);
      }
      read(t, "gamma", c.train.gamma);
      read(t, "batch_size", c.train.batch_size);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "weight_decay", c.train.weight_decay);
      read(t, "total_steps", c.train.total_steps);
      read(t, "seed", c.train.seed);
      read(t, "eval_every", c.train.eval_every);
    }
    if (auto it = j.find("data"); it != j.end()) {
      const json& d = *it;
      only_keys(d,
                {"num_classes", "input_dim", "n_train", "n_dev", "n_test", "easy_fraction",
                 "easy_margin", "hard_margin", "hard_offset", "label_noise", "shift", "seed"},
                "data");
      read(d, "num_classes", c.data.num_classes);
      read(d, "input_dim", c.data.input_dim);
      read(d, "n_train", c.data.n_train);
      read(d, "n_dev", c.data.n_dev);
      read(d, "n_test", c.data.n_test);
      read(d, "easy_fraction", c.data.easy_fraction);
      read(d, "easy_margin", c.data.easy_margin);
      read(d, "hard_margin", c.data.hard_margin);
      read(d, "hard_offset", c.data.hard_offset);
      read(d, "label_noise", c.data.label_noise);
      read(d, "shift", c.data.shift);
      read(d, "seed", c.data.seed);
    }
    read(j, "data_dir", c.data_dir);
    if (auto it = j.find("policies"); it != j.end()) {
      if (!it->is_array()) throw ValidationError("config: policies must be an array");
      c.policies.clear();
      for (const auto& p : *it) c.policies.push_back(policy_from_json(p));
    }
    read(j, "taus", c.taus);
    read(j, "match_taus", c.match_taus);
    read(j, "lambdas", c.lambdas);
    read(j, "select_lambda", c.select_lambda);
    read(j, "target_speedups", c.target_speedups);
    read(j, "speedup_tolerance", c.speedup_tolerance);
    read(j, "histogram_taus", c.histogram_taus);
    read(j, "diagnose_layers", c.diagnose_layers);
    read(j, "diagnose_taus", c.diagnose_taus);
    if (auto it = j.find("shift"); it != j.end()) {
      const json& s = *it;
      only_keys(s, {"magnitude", "vector", "kmeans_iters", "kmeans_tol", "target_speedup", "adjust"},
                "shift");
      read(s, "magnitude", c.shift.magnitude);
      read(s, "vector", c.shift.vector);
      read(s, "kmeans_iters", c.shift.kmeans_iters);
      read(s, "kmeans_tol", c.shift.kmeans_tol);
      read(s, "target_speedup", c.shift.target_speedup);
      read(s, "adjust", c.shift.adjust);
    }
    read(j, "out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

std::string canonical_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) {
  return content_hash(canonical_config(cfg));
}

// ---------------------------------------------------------------------------
// Building blocks

Splits load_or_generate(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) return generate(cfg.data);
  const fs::path dir(cfg.data_dir);
  Splits s{load_dataset(dir / "train.jsonl"), load_dataset(dir / "dev.jsonl"),
           load_dataset(dir / "test.jsonl")};
  for (const Dataset* d : {&s.train, &s.dev, &s.test}) {
    for (const auto& smp : *d) {
      if (smp.x.size() != cfg.model.input_dim) {
        throw ShapeError("dataset dimension does not match model input_dim");
      }
      if (smp.y >= cfg.model.num_classes) throw ValidationError("dataset label >= num_classes");
    }
  }
  return s;
}

std::vector<double> shift_vector(const ExperimentConfig& cfg) {
  if (!cfg.shift.vector.empty()) return cfg.shift.vector;
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.data.seed),
                    static_cast<std::uint32_t>(cfg.data.seed >> 32), 0x5348u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec dir(cfg.model.input_dim);
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = n01(rng);
  dir *= cfg.shift.magnitude / dir.norm();
  return {dir.data(), dir.data() + dir.size()};
}

Dataset translate(const Dataset& data, const std::vector<double>& delta) {
  Dataset out = data;
  for (auto& s : out) {
    if (static_cast<std::size_t>(s.x.size()) != delta.size()) {
      throw ShapeError("translate: shift length differs from input dimension");
    }
    for (Eigen::Index i = 0; i < s.x.size(); ++i) s.x(i) += delta[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<double> sweep_values(const ExitPolicy& p, std::span<const double> taus,
                                 int num_layers) {
  switch (p.kind) {
    case PolicyKind::kPatience:
    case PolicyKind::kFixedLayer: {
      std::vector<double> v;
      for (int m = 1; m <= num_layers; ++m) v.push_back(m);
      return v;
    }
    case PolicyKind::kOracle:
      return {0.0};
    default:
      return {taus.begin(), taus.end()};
  }
}

namespace {

std::optional<double> best_lambda(const ProfileSet& dev, const FlopsModel& flops,
                                  std::span<const double> lambdas, std::span<const double> taus,
                                  double target, double tol) {
  std::optional<double> best;
  double best_acc = -1.0;
  ExitPolicy tmpl;
  tmpl.kind = PolicyKind::kEdr;
  for (double l : lambdas) {
    tmpl.lambda = l;
    const auto row = match_speedup(sweep(dev, flops, tmpl, taus), target, tol);
    if (row && row->accuracy > best_acc) {
      best_acc = row->accuracy;
      best = l;
    }
  }
  return best;
}

// Closest row to the target regardless of tolerance (ties: lower tau).
SweepRow nearest_row(const SweepResult& s, double target) {
  const SweepRow* best = &s.rows.front();
  for (const auto& r : s.rows) {
    if (std::abs(r.speedup - target) < std::abs(best->speedup - target)) best = &r;
  }
  return *best;
}

ShiftCondition condition_of(const SweepRow& r) { return {r.tau, r.accuracy, r.speedup}; }

}  // namespace

std::optional<double> select_lambda(const Model& model, const PrototypeBank& bank,
                                    const Dataset& dev, std::span<const double> lambdas,
                                    std::span<const double> taus, double target, double tol) {
  return best_lambda(profile_dataset(model, bank, dev, true),
                     FlopsModel::from_config(model.config()), lambdas, taus, target, tol);
}

PrototypeBank adjust_bank(const Model& model, const PrototypeBank& bank, const Dataset& data,
                          int max_iters, double tol) {
  if (data.empty()) throw ValidationError("adjust_bank: no samples");
  const BatchForward fwd = forward_batch(model, stack_inputs(data));
  PrototypeBank out = bank;
  for (int m = 0; m < bank.num_layers(); ++m) {
    const Mat& reps = model.config().use_projection ? fwd.proj[static_cast<std::size_t>(m)]
                                                    : fwd.hidden[static_cast<std::size_t>(m)];
    out = adjust_prototypes_kmeans(out, m, reps, max_iters, tol).bank;
  }
  return out;
}

ShiftReport shift_experiment(const Model& model, const PrototypeBank& bank,
                             const Dataset& shifted, const ExitPolicy& edr,
                             std::span<const double> taus, const ShiftConfig& sc, double tol) {
  if (edr.kind != PolicyKind::kEdr) throw ValidationError("shift: policy must be edr");
  const FlopsModel flops = FlopsModel::from_config(model.config());
  ShiftReport rep;
  rep.lambda = edr.lambda;
  const SweepResult before = sweep(profile_dataset(model, bank, shifted, true), flops, edr, taus);
  const SweepRow anchor = nearest_row(before, sc.target_speedup);
  rep.before = condition_of(anchor);
  if (!sc.adjust) return rep;
  if (auto r = match_speedup(before, sc.target_speedup, tol)) rep.before_matched = condition_of(*r);
  const PrototypeBank adjusted = adjust_bank(model, bank, shifted, sc.kmeans_iters, sc.kmeans_tol);
  const SweepResult after =
      sweep(profile_dataset(model, adjusted, shifted, true), flops, edr, taus);
  for (const auto& r : after.rows) {
    if (r.tau == anchor.tau) {
      rep.after = condition_of(r);
      break;
    }
  }
  if (auto r = match_speedup(after, sc.target_speedup, tol)) rep.after_matched = condition_of(*r);
  return rep;
}

std::vector<std::string> policy_labels(std::span<const ExitPolicy> policies) {
  std::vector<std::string> out;
  std::map<std::string, int> seen;
  for (const auto& p : policies) {
    std::string base(to_string(p.kind));
    const int n = ++seen[base];
    out.push_back(n == 1 ? base : base + "_" + std::to_string(n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

// Collects outputs and writes them together at the end of a command.
class Outputs {
 public:
  Outputs(const ExperimentConfig& cfg, const CommandOptions& opt, std::string command)
      : dir_(cfg.out_dir), opt_(opt), command_(std::move(command)) {
    if (!fs::exists(dir_) && !opt_.create_dirs) {
      throw IoError("output directory " + dir_.string() + " does not exist (use --create)");
    }
    if (fs::exists(dir_) && !fs::is_directory(dir_)) {
      throw IoError(dir_.string() + " is not a directory");
    }
    json echo;
    echo["command"] = command_;
    echo["config"] = to_json(cfg);
    echo["config_hash"] = config_hash(cfg);
    echo_ = std::move(echo);
  }

  void input(const std::string& key, const std::string& value) { echo_["inputs"][key] = value; }
  void add(const std::string& name, std::string content) {
    files_.emplace_back(name, std::move(content));
  }
  void add_binary(const std::string& name, std::function<void(const fs::path&)> writer) {
    binaries_.emplace_back(name, std::move(writer));
  }
  const fs::path& dir() const { return dir_; }

  void commit() {
    add("config." + command_ + ".json", echo_.dump(2) + "\n");
    if (!opt_.overwrite) {
      for (const auto& [name, c] : files_) refuse_existing(name);
      for (const auto& [name, w] : binaries_) refuse_existing(name);
    }
    fs::create_directories(dir_);
    for (const auto& [name, w] : binaries_) w(dir_ / name);
    for (const auto& [name, c] : files_) write_text_file(dir_ / name, c);
  }

 private:
  void refuse_existing(const std::string& name) const {
    if (fs::exists(dir_ / name)) {
      throw IoError((dir_ / name).string() + " exists (use --overwrite)");
    }
  }

  fs::path dir_;
  CommandOptions opt_;
  std::string command_;
  json echo_;
  std::vector<std::pair<std::string, std::string>> files_;
  std::vector<std::pair<std::string, std::function<void(const fs::path&)>>> binaries_;
};

std::string dataset_jsonl(const Dataset& d) {
  std::ostringstream os;
  for (const auto& s : d) {
    json j;
    j["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
    j["y"] = s.y;
    os << j.dump() << '\n';
  }
  return os.str();
}

// The checkpoint must carry the configured model (seed aside). The ablation
// checkpoint for diagnose is the same model without a projection head.
Checkpoint require_checkpoint(const fs::path& path, const ExperimentConfig& cfg,
                              bool without_projection = false) {
  if (!fs::exists(path)) throw IoError("checkpoint " + path.string() + " not found");
  Checkpoint ck = load_checkpoint(path);
  ModelConfig a = ck.config, b = cfg.model;
  a.seed = b.seed = 0;
  if (without_projection) {
    b.use_projection = false;
    a.proto_dim = b.proto_dim;
  }
  if (!(a == b)) throw ShapeError("checkpoint " + path.string() + " does not match the model config");
  return ck;
}

double first_edr_lambda(const ExperimentConfig& cfg) {
  for (const auto& p : cfg.policies) {
    if (p.kind == PolicyKind::kEdr) return p.lambda;
  }
  return 1.0;
}

std::string tau_tag(double tau) { return "tau" + format_real(tau); }

}  // namespace

void cmd_gen(const ExperimentConfig& cfg, const CommandOptions& opt) {
  cfg.data.validate();
  Outputs out(cfg, opt, "gen");
  const Splits s = generate(cfg.data);
  out.add("train.jsonl", dataset_jsonl(s.train));
  out.add("dev.jsonl", dataset_jsonl(s.dev));
  out.add("test.jsonl", dataset_jsonl(s.test));
  out.commit();
}

TrainResult cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt,
                      const std::optional<fs::path>& resume) {
  cfg.validate();
  Outputs out(cfg, opt, "train");
  std::optional<Checkpoint> start;
  if (resume) {
    if (!fs::exists(*resume)) throw IoError("checkpoint " + resume->string() + " not found");
    start = load_checkpoint(*resume);
    ModelConfig a = start->config, b = cfg.model;
    a.seed = b.seed = 0;
    if (!(a == b)) throw ShapeError("resume checkpoint does not match the model config");
    if (start->step > static_cast<std::uint64_t>(cfg.train.total_steps)) {
      throw ValidationError("resume checkpoint is past total_steps");
    }
    out.input("resume", resume->string());
  }
  const Splits data = load_or_generate(cfg);
  Model model = start ? Model(start->config, start->params) : Model(cfg.model);
  PrototypeBank bank = start ? start->bank : make_bank(cfg.model, cfg.train.gamma);
  const std::int64_t step0 = start ? static_cast<std::int64_t>(start->step) : 0;
  TrainResult res = train(std::move(model), std::move(bank), data.train, data.dev, cfg.train, step0);

  out.add_binary("best.ckpt", [&](const fs::path& p) { save_checkpoint(res.best_state, p); });
  out.add_binary("final.ckpt", [&](const fs::path& p) { save_checkpoint(res.final_state, p); });
  out.add("train_report.csv", train_report_csv(res.report));
  json rj = train_report_json(res.report);
  rj["config_hash"] = config_hash(cfg);
  out.add("train_report.json", rj.dump(2) + "\n");
  out.commit();
  return res;
}

std::vector<SweepResult> cmd_sweep(const ExperimentConfig& cfg, const fs::path& checkpoint,
                                   const CommandOptions& opt) {
  cfg.validate();
  const Checkpoint ck = require_checkpoint(checkpoint, cfg);
  Outputs out(cfg, opt, "sweep");
  out.input("checkpoint", checkpoint.string());
  const Model model(ck.config, ck.params);
  const Splits data = load_or_generate(cfg);
  const ProfileSet prof = profile_dataset(model, ck.bank, data.test, true);
  const FlopsModel flops = FlopsModel::from_config(ck.config);
  const auto labels = policy_labels(cfg.policies);
  const std::string hash = config_hash(cfg);

  std::vector<SweepResult> results;
  std::vector<Curve> curves;
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    const ExitPolicy& p = cfg.policies[i];
    const auto values = sweep_values(p, cfg.taus, ck.config.num_layers);
    SweepResult s = sweep(prof, flops, p, values);
    out.add("sweep_" + labels[i] + ".csv", sweep_csv(s));
    json sj = sweep_json(s);
    sj["config_hash"] = hash;
    out.add("sweep_" + labels[i] + ".json", sj.dump(2) + "\n");

    Curve c{labels[i], {}, p.kind == PolicyKind::kOracle};
    for (const auto& r : s.rows) c.points.emplace_back(r.speedup, r.accuracy);
    curves.push_back(std::move(c));

    const bool thresholded = p.kind == PolicyKind::kEdr || p.kind == PolicyKind::kEntropy ||
                             p.kind == PolicyKind::kConfidencePatience;
    if (thresholded) {
      for (double tau : cfg.histogram_taus) {
        const ExitPolicy at = with_parameter(p, tau);
        std::vector<ExitTrace> traces;
        traces.reserve(prof.profiles.size());
        for (std::size_t n = 0; n < prof.profiles.size(); ++n) {
          traces.push_back(decide(prof.profiles[n], at, prof.labels[n]));
        }
        const SweepRow row = summarize(traces, prof.labels, flops, tau);
        const std::string stem = labels[i] + "_" + tau_tag(tau);
        out.add("hist_" + stem + ".svg",
                histogram_svg(row.exit_histogram,
                              labels[i] + " exit layers, tau = " + format_real(tau)));
        out.add_binary("traces_" + stem + ".jsonl",
                       [traces](const fs::path& path) { write_traces_jsonl(traces, path); });
      }
    }
    results.push_back(std::move(s));
  }
  out.add("tradeoff.svg", tradeoff_svg(curves, "accuracy vs speed-up [" + hash.substr(0, 10) + "]"));
  out.commit();
  return results;
}

std::vector<CompareEntry> cmd_compare(const ExperimentConfig& cfg, const fs::path& checkpoint,
                                      const CommandOptions& opt) {
  cfg.validate();
  const Checkpoint ck = require_checkpoint(checkpoint, cfg);
  Outputs out(cfg, opt, "compare");
  out.input("checkpoint", checkpoint.string());
  const Model model(ck.config, ck.params);
  const Splits data = load_or_generate(cfg);
  const FlopsModel flops = FlopsModel::from_config(ck.config);
  const ProfileSet test = profile_dataset(model, ck.bank, data.test, true);
  std::optional<ProfileSet> dev;
  const auto labels = policy_labels(cfg.policies);
  const std::vector<double>& taus = cfg.match_taus.empty() ? cfg.taus : cfg.match_taus;

  std::vector<CompareEntry> table;
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    for (double target : cfg.target_speedups) {
      ExitPolicy p = cfg.policies[i];
      CompareEntry e{labels[i], target, std::nullopt, std::nullopt};
      if (p.kind == PolicyKind::kEdr) {
        if (cfg.select_lambda && !cfg.lambdas.empty()) {
          if (!dev) dev = profile_dataset(model, ck.bank, data.dev, true);
          if (auto l = best_lambda(*dev, flops, cfg.lambdas, taus, target, cfg.speedup_tolerance)) {
            p.lambda = *l;
          }
        }
        e.lambda = p.lambda;
      }
      const SweepResult s = sweep(test, flops, p, sweep_values(p, taus, ck.config.num_layers));
      e.row = match_speedup(s, target, cfg.speedup_tolerance);
      table.push_back(std::move(e));
    }
  }

  std::ostringstream csv;
  csv << "policy,target_speedup,available,lambda,tau,accuracy,speedup\n";
  json j;
  j["config_hash"] = config_hash(cfg);
  j["tolerance"] = cfg.speedup_tolerance;
  j["entries"] = json::array();
  for (const auto& e : table) {
    csv << e.policy << ',' << format_real(e.target) << ',' << (e.row ? "yes" : "no") << ','
        << (e.lambda ? format_real(*e.lambda) : "") << ',';
    json je = {{"policy", e.policy}, {"target_speedup", e.target}, {"available", e.row.has_value()}};
    je["lambda"] = e.lambda ? json(*e.lambda) : json();
    if (e.row) {
      csv << format_real(e.row->tau) << ',' << format_real(e.row->accuracy) << ','
          << format_real(e.row->speedup);
      je["tau"] = e.row->tau;
      je["accuracy"] = e.row->accuracy;
      je["speedup"] = e.row->speedup;
    } else {
      csv << ",,";
    }
    csv << '\n';
    j["entries"].push_back(std::move(je));
  }
  out.add("compare.csv", csv.str());
  out.add("compare.json", j.dump(2) + "\n");
  out.commit();
  return table;
}

DiagnoseResult cmd_diagnose(const ExperimentConfig& cfg, const fs::path& checkpoint,
                            const std::optional<fs::path>& checkpoint_no_pn,
                            const CommandOptions& opt) {
  cfg.validate();
  const Checkpoint ck = require_checkpoint(checkpoint, cfg);
  for (int l : cfg.diagnose_layers) {
    if (l < 1 || l >= ck.config.num_layers) {
      throw ValidationError("diagnose: layer " + std::to_string(l) +
                            " has no prototypical network (valid: 1..M-1)");
    }
  }
  std::optional<Checkpoint> plain;
  if (checkpoint_no_pn) plain = require_checkpoint(*checkpoint_no_pn, cfg, true);
  Outputs out(cfg, opt, "diagnose");
  out.input("checkpoint", checkpoint.string());
  if (checkpoint_no_pn) out.input("checkpoint_no_pn", checkpoint_no_pn->string());

  const Model model(ck.config, ck.params);
  const Splits data = load_or_generate(cfg);
  const ProfileSet prof = profile_dataset(model, ck.bank, data.test, true);
  const double lambda = first_edr_lambda(cfg);

  DiagnoseResult res;
  std::ostringstream csv;
  csv << "layer,tau,lambda,acc_entropy,acc_edr\n";
  json j;
  j["config_hash"] = config_hash(cfg);
  j["correctness"] = json::array();
  for (int l : cfg.diagnose_layers) {
    for (double tau : cfg.diagnose_taus) {
      const CorrectnessAccuracy a = correctness_estimation_accuracy(prof, l, tau, lambda);
      res.correctness.push_back({l, tau, a});
      csv << l << ',' << format_real(tau) << ',' << format_real(lambda) << ','
          << format_real(a.entropy) << ',' << format_real(a.edr) << '\n';
      j["correctness"].push_back(
          {{"layer", l}, {"tau", tau}, {"lambda", lambda}, {"acc_entropy", a.entropy}, {"acc_edr", a.edr}});
    }
  }
  out.add("correctness.csv", csv.str());

  if (plain) {
    if (plain->config.num_layers != ck.config.num_layers) {
      throw ShapeError("diagnose: the two checkpoints differ in depth");
    }
    const Model other(plain->config, plain->params);
    std::ostringstream sc;
    sc << "layer,rho_with_pn,rho_without_pn\n";
    j["spearman"] = json::array();
    for (int l : cfg.diagnose_layers) {
      const Homogeneity h = spearman_homogeneity(model, ck.bank, other, plain->bank, data.test, l);
      res.spearman.push_back({l, h});
      auto cell = [](const std::optional<double>& v) {
        return v ? format_real(*v) : std::string("undefined");
      };
      sc << l << ',' << cell(h.with_projection) << ',' << cell(h.without_projection) << '\n';
      j["spearman"].push_back(
          {{"layer", l},
           {"rho_with_pn", h.with_projection ? json(*h.with_projection) : json()},
           {"rho_without_pn", h.without_projection ? json(*h.without_projection) : json()}});
    }
    out.add("spearman.csv", sc.str());
  } else {
    j["spearman_notice"] = "omitted: no checkpoint without prototypical networks was supplied";
  }
  out.add("diagnose.json", j.dump(2) + "\n");
  out.commit();
  return res;
}

ShiftReport cmd_shift(const ExperimentConfig& cfg, const fs::path& checkpoint,
                      const CommandOptions& opt) {
  cfg.validate();
  const Checkpoint ck = require_checkpoint(checkpoint, cfg);
  Outputs out(cfg, opt, "shift");
  out.input("checkpoint", checkpoint.string());
  const Model model(ck.config, ck.params);
  const Splits data = load_or_generate(cfg);
  const Dataset shifted = translate(data.test, shift_vector(cfg));
  ExitPolicy edr;
  edr.kind = PolicyKind::kEdr;
  edr.lambda = first_edr_lambda(cfg);
  const std::vector<double>& taus = cfg.match_taus.empty() ? cfg.taus : cfg.match_taus;
  const ShiftReport rep =
      shift_experiment(model, ck.bank, shifted, edr, taus, cfg.shift, cfg.speedup_tolerance);

  std::ostringstream csv;
  csv << "condition,tau,accuracy,speedup\n";
  json j;
  j["config_hash"] = config_hash(cfg);
  j["lambda"] = rep.lambda;
  j["shift"] = shift_vector(cfg);
  auto emit = [&](const char* name, const std::optional<ShiftCondition>& c) {
    if (!c) return;
    csv << name << ',' << format_real(c->tau) << ',' << format_real(c->accuracy) << ','
        << format_real(c->speedup) << '\n';
    j["conditions"][name] = {{"tau", c->tau}, {"accuracy", c->accuracy}, {"speedup", c->speedup}};
  };
  emit("before", rep.before);
  emit("after", rep.after);
  emit("before_matched", rep.before_matched);
  emit("after_matched", rep.after_matched);
  out.add("shift.csv", csv.str());
  out.add("shift.json", j.dump(2) + "\n");
  out.commit();
  return rep;
}

}  // namespace exitlab
