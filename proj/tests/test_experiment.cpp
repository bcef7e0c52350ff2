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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "exitlab/error.hpp"
#include "exitlab/experiment.hpp"
#include "exitlab/report.hpp"

using namespace exitlab;
namespace fs = std::filesystem;

namespace {

// Fresh empty directory under the system temp dir.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("exitlab_cmd_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

ExperimentConfig tiny(const fs::path& out, int layers = 6) {
  ExperimentConfig c = default_experiment();
  c.model.num_layers = layers;
  c.model.input_dim = 4;
  c.model.hidden_dim = 8;
  c.model.proto_dim = 4;
  c.data.input_dim = 4;
  c.data.n_train = 200;
  c.data.n_dev = 50;
  c.data.n_test = 100;
  c.train.total_steps = 50;
  c.train.batch_size = 16;
  c.train.eval_every = 25;
  c.taus = {0.0, 0.1, 0.3, 0.6, 1.0};
  c.out_dir = out.string();
  return c;
}

CommandOptions fresh() { return {}; }
CommandOptions overwrite() { return {true, false}; }

// Trains the tiny config once into its own directory and returns the final checkpoint.
const fs::path& trained_checkpoint() {
  static const fs::path ck = [] {
    const fs::path dir = scratch("trained");
    cmd_train(tiny(dir), fresh());
    return dir / "final.ckpt";
  }();
  return ck;
}

}  // namespace

TEST_CASE("content hash follows the git blob convention") {
  CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("config survives a JSON round trip and rejects unknown keys") {
  ExperimentConfig c = tiny("somewhere");
  c.shift.vector = {1.0, 0.0, 0.0, 0.0};
  c.policies[0].lambda = 1.5;
  const ExperimentConfig back = experiment_from_json(to_json(c));
  CHECK(canonical_config(back) == canonical_config(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(back) == content_hash(canonical_config(c)));

  nlohmann::json j = to_json(c);
  j["model"]["num_layer"] = 3;
  CHECK_THROWS_AS(experiment_from_json(j), ValidationError);
  nlohmann::json bad_type = to_json(c);
  bad_type["train"]["total_steps"] = "many";
  CHECK_THROWS_AS(experiment_from_json(bad_type), ValidationError);

  // Partial documents override only what they name.
  const ExperimentConfig partial = experiment_from_json({{"train", {{"alpha", 0.5}}}}, c);
  CHECK(partial.train.alpha == 0.5);
  CHECK(partial.model.num_layers == c.model.num_layers);
}

TEST_CASE("gen is reproducible and guarded") {
  const fs::path dir = scratch("gen");
  const ExperimentConfig c = tiny(dir);
  cmd_gen(c, fresh());
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "config.gen.json"}) {
    CHECK(fs::exists(dir / f));
  }
  const std::string first = slurp(dir / "train.jsonl");
  CHECK_THROWS_AS(cmd_gen(c, fresh()), IoError);
  cmd_gen(c, overwrite());
  CHECK(slurp(dir / "train.jsonl") == first);
  CHECK(lines(first).size() == 200);

  const auto echo = nlohmann::json::parse(slurp(dir / "config.gen.json"));
  CHECK(echo["command"] == "gen");
  CHECK(echo["config_hash"] == config_hash(c));

  ExperimentConfig missing = tiny(dir / "nested" / "deeper");
  CHECK_THROWS_AS(cmd_gen(missing, fresh()), IoError);
  CHECK_FALSE(fs::exists(dir / "nested"));
  cmd_gen(missing, {false, true});
  CHECK(fs::exists(dir / "nested" / "deeper" / "test.jsonl"));

  ExperimentConfig empty = tiny(dir);
  empty.data.n_train = 0;
  CHECK_THROWS_AS(cmd_gen(empty, overwrite()), ValidationError);
}

TEST_CASE("generated data can be fed back through data_dir") {
  const fs::path dir = scratch("datadir");
  ExperimentConfig c = tiny(dir);
  cmd_gen(c, fresh());
  ExperimentConfig from_files = c;
  from_files.data_dir = dir.string();
  const Splits a = load_or_generate(c), b = load_or_generate(from_files);
  REQUIRE(a.test.size() == b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    CHECK(a.test[i].y == b.test[i].y);
    CHECK((a.test[i].x - b.test[i].x).cwiseAbs().maxCoeff() <= 1e-12);
  }
  from_files.model.input_dim = 5;
  CHECK_THROWS(load_or_generate(from_files));
}

TEST_CASE("tiny training run writes its artifacts and resumes as a no-op") {
  const fs::path dir = scratch("train");
  ExperimentConfig c = tiny(dir, 2);
  c.diagnose_layers = {1};
  const TrainResult r = cmd_train(c, fresh());
  for (const char* f : {"best.ckpt", "final.ckpt", "train_report.csv", "train_report.json",
                        "config.train.json"}) {
    CHECK(fs::exists(dir / f));
  }
  CHECK(r.report.steps.size() == 50);
  CHECK(lines(slurp(dir / "train_report.csv")).size() == 51);

  const fs::path again = scratch("train_resume");
  fs::copy_file(dir / "final.ckpt", again / "start.ckpt");
  ExperimentConfig resumed = c;
  resumed.out_dir = again.string();
  const TrainResult r2 = cmd_train(resumed, fresh(), again / "start.ckpt");
  CHECK(r2.report.steps.empty());
  CHECK(slurp(again / "final.ckpt") == slurp(dir / "final.ckpt"));

  ExperimentConfig wider = resumed;
  wider.model.hidden_dim = 9;
  CHECK_THROWS_AS(cmd_train(wider, overwrite(), again / "start.ckpt"), ShapeError);
  CHECK_THROWS_AS(cmd_train(resumed, overwrite(), again / "absent.ckpt"), IoError);
}

TEST_CASE("sweep with a single threshold") {
  const fs::path dir = scratch("sweep1");
  ExperimentConfig c = tiny(dir);
  c.taus = {0.3};
  c.policies.resize(1);  // edr
  c.histogram_taus = {0.3};
  const auto results = cmd_sweep(c, trained_checkpoint(), fresh());
  REQUIRE(results.size() == 1);
  CHECK(results[0].rows.size() == 1);
  CHECK(lines(slurp(dir / "sweep_edr.csv")).size() == 2);
  CHECK(fs::exists(dir / "tradeoff.svg"));
  CHECK(fs::exists(dir / "config.sweep.json"));
  CHECK(slurp(dir / "tradeoff.svg").find("<svg") != std::string::npos);
}

TEST_CASE("sweep renders the oracle as one point and validates inputs first") {
  const fs::path dir = scratch("sweep_all");
  const ExperimentConfig c = tiny(dir);
  const auto results = cmd_sweep(c, trained_checkpoint(), fresh());
  const auto labels = policy_labels(c.policies);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    CHECK(fs::exists(dir / ("sweep_" + labels[i] + ".csv")));
    if (c.policies[i].kind == PolicyKind::kOracle) CHECK(results[i].rows.size() == 1);
    if (c.policies[i].kind == PolicyKind::kPatience) CHECK(results[i].rows.size() == 6);
  }
  CHECK(fs::exists(dir / "hist_edr_tau0.2.svg"));
  CHECK(fs::exists(dir / "traces_edr_tau0.2.jsonl"));

  const fs::path none = scratch("sweep_missing");
  ExperimentConfig m = tiny(none);
  CHECK_THROWS_AS(cmd_sweep(m, none / "absent.ckpt", fresh()), IoError);
  CHECK(fs::is_empty(none));
  ExperimentConfig wrong = tiny(none, 3);
  CHECK_THROWS_AS(cmd_sweep(wrong, trained_checkpoint(), fresh()), ShapeError);
  CHECK(fs::is_empty(none));
}

TEST_CASE("compare builds a policy by target table") {
  const fs::path dir = scratch("compare");
  ExperimentConfig c = tiny(dir);
  c.policies.resize(1);
  c.select_lambda = false;
  c.target_speedups = {2.0};
  const auto one = cmd_compare(c, trained_checkpoint(), fresh());
  REQUIRE(one.size() == 1);
  CHECK(lines(slurp(dir / "compare.csv")).size() == 2);

  ExperimentConfig unreachable = c;
  unreachable.target_speedups = {50.0};
  const auto none = cmd_compare(unreachable, trained_checkpoint(), overwrite());
  REQUIRE(none.size() == 1);
  CHECK_FALSE(none[0].row.has_value());
  CHECK(lines(slurp(dir / "compare.csv"))[1].find(",no,") != std::string::npos);
}

TEST_CASE("compare values are recomputable from sweeps") {
  const fs::path dir = scratch("compare_sweep");
  ExperimentConfig c = tiny(dir);
  c.policies.resize(2);  // edr, entropy
  c.select_lambda = false;
  c.taus = c.match_taus;
  c.histogram_taus = {};
  const auto table = cmd_compare(c, trained_checkpoint(), fresh());
  const auto sweeps = cmd_sweep(c, trained_checkpoint(), fresh());
  for (const auto& e : table) {
    const std::size_t i = e.policy == "edr" ? 0 : 1;
    const auto m = match_speedup(sweeps[i], e.target, c.speedup_tolerance);
    REQUIRE(m.has_value() == e.row.has_value());
    if (m) {
      CHECK(m->tau == e.row->tau);
      CHECK(m->accuracy == e.row->accuracy);
    }
  }
}

TEST_CASE("diagnose shapes and optional rank section") {
  const fs::path dir = scratch("diagnose");
  ExperimentConfig c = tiny(dir);
  c.diagnose_layers = {2, 5};
  c.diagnose_taus = {0.2};
  const DiagnoseResult d = cmd_diagnose(c, trained_checkpoint(), std::nullopt, fresh());
  CHECK(d.correctness.size() == 2);
  CHECK(d.spearman.empty());
  CHECK(lines(slurp(dir / "correctness.csv")).size() == 3);
  CHECK_FALSE(fs::exists(dir / "spearman.csv"));
  const auto j = nlohmann::json::parse(slurp(dir / "diagnose.json"));
  CHECK(j.contains("spearman_notice"));

  const fs::path raw_dir = scratch("diagnose_raw");
  ExperimentConfig raw = tiny(raw_dir);
  raw.model.use_projection = false;
  cmd_train(raw, fresh());
  const DiagnoseResult both =
      cmd_diagnose(c, trained_checkpoint(), raw_dir / "final.ckpt", overwrite());
  CHECK(both.spearman.size() == 2);
  CHECK(fs::exists(dir / "spearman.csv"));

  ExperimentConfig last = c;
  last.diagnose_layers = {6};
  CHECK_THROWS_AS(cmd_diagnose(last, trained_checkpoint(), std::nullopt, overwrite()),
                  ValidationError);
}

TEST_CASE("shift reports both conditions at one threshold") {
  const fs::path dir = scratch("shift");
  ExperimentConfig c = tiny(dir);
  const ShiftReport r = cmd_shift(c, trained_checkpoint(), fresh());
  REQUIRE(r.after.has_value());
  CHECK(r.after->tau == r.before.tau);
  const auto j = nlohmann::json::parse(slurp(dir / "shift.json"));
  CHECK(j["conditions"].contains("before"));
  CHECK(j["conditions"].contains("after"));

  ExperimentConfig off = c;
  off.shift.adjust = false;
  const ShiftReport o = cmd_shift(off, trained_checkpoint(), overwrite());
  CHECK_FALSE(o.after.has_value());
  const auto jo = nlohmann::json::parse(slurp(dir / "shift.json"));
  CHECK(jo["conditions"].size() == 1);
  CHECK(lines(slurp(dir / "shift.csv")).size() == 2);
}

TEST_CASE("shift by the zero vector leaves accuracy unchanged") {
  const fs::path dir = scratch("shift_zero");
  ExperimentConfig c = tiny(dir);
  c.shift.vector.assign(4, 0.0);
  const ShiftReport r = cmd_shift(c, trained_checkpoint(), fresh());
  REQUIRE(r.after.has_value());
  CHECK(std::abs(r.after->accuracy - r.before.accuracy) <= 1e-6);
}
