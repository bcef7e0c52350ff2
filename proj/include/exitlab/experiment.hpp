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

#ifndef EXITLAB_EXPERIMENT_HPP_
#define EXITLAB_EXPERIMENT_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "exitlab/data.hpp"
#include "exitlab/exiting.hpp"
#include "exitlab/harness.hpp"
#include "exitlab/model.hpp"
#include "exitlab/training.hpp"
#include "json.hpp"

namespace exitlab {

// Defaults are the moderate-shift preset.
struct ShiftConfig {
  // Length of the test-input translation. The direction is a seeded random
  // unit vector unless `vector` is given, in which case it is used verbatim.
  double magnitude = 2.0;
  std::vector<double> vector;
  int kmeans_iters = 20;
  double kmeans_tol = 1e-6;
  double target_speedup = 2.5;
  bool adjust = true;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DatasetSpec data;
  // When set, train/dev/test.jsonl are read from here instead of generated.
  std::string data_dir;
  std::vector<ExitPolicy> policies;
  std::vector<double> taus;     // swept thresholds
  std::vector<double> lambdas;  // candidates for edr, picked on dev
  // Finer grid used when matching a target speed-up (compare, shift).
  std::vector<double> match_taus;
  bool select_lambda = true;
  std::vector<double> target_speedups{2.0, 3.0};
  double speedup_tolerance = 0.15;
  std::vector<double> histogram_taus{0.07, 0.2, 0.5};
  std::vector<int> diagnose_layers{2};
  std::vector<double> diagnose_taus{0.2};
  ShiftConfig shift;
  std::string out_dir = "run";

  void validate() const;
};

// 0..1 in steps of 0.005 plus 120 log-spaced points in [1e-6, 1].
std::vector<double> dense_tau_grid();

// The default synthetic benchmark.
ExperimentConfig default_experiment();

nlohmann::json to_json(const ExperimentConfig& cfg);
// Keys missing from `j` keep the values in `base`; unknown keys are errors.
ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                      const ExperimentConfig& base = default_experiment());
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Canonical serialization (sorted keys) and its content hash.
std::string canonical_config(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

// Generated or loaded splits. The configured shift, if any, is already in
// the generated test split.
Splits load_or_generate(const ExperimentConfig& cfg);

// The translation used by the shift experiment.
std::vector<double> shift_vector(const ExperimentConfig& cfg);
Dataset translate(const Dataset& data, const std::vector<double>& delta);

// Values swept for a policy kind: taus for threshold rules, 1..M for
// patience and fixed_layer, a single point for oracle.
std::vector<double> sweep_values(const ExitPolicy& p, std::span<const double> taus,
                                 int num_layers);

// Picks the lambda whose sweep accuracy at the target speed-up is highest on
// `dev` (ties: first in the list). nullopt when no candidate reaches the
// target within tol.
std::optional<double> select_lambda(const Model& model, const PrototypeBank& bank,
                                    const Dataset& dev, std::span<const double> lambdas,
                                    std::span<const double> taus, double target, double tol);

struct CompareEntry {
  std::string policy;
  double target = 0.0;
  std::optional<double> lambda;  // edr only
  std::optional<SweepRow> row;   // empty: no row within tolerance
};

struct ShiftCondition {
  double tau = 0.0;
  double accuracy = 0.0;
  double speedup = 1.0;
};

struct ShiftReport {
  double lambda = 1.0;
  // Both conditions at the tau that matches the target on the unadjusted
  // model, and each condition at its own matched tau. Without adjustment
  // only `before` is filled.
  ShiftCondition before;
  std::optional<ShiftCondition> after;
  std::optional<ShiftCondition> before_matched;
  std::optional<ShiftCondition> after_matched;
};

// Evaluates the edr rule on `shifted` with the given bank and with the bank
// re-centered by K-means on the shifted inputs.
ShiftReport shift_experiment(const Model& model, const PrototypeBank& bank,
                             const Dataset& shifted, const ExitPolicy& edr,
                             std::span<const double> taus, const ShiftConfig& sc, double tol);

// Re-centers every layer's prototypes on unlabeled inputs.
PrototypeBank adjust_bank(const Model& model, const PrototypeBank& bank, const Dataset& data,
                          int max_iters, double tol);

// Display name per policy, unique within the list.
std::vector<std::string> policy_labels(std::span<const ExitPolicy> policies);

// Command entry points. Each writes into cfg.out_dir, which must exist
// unless create_dirs is set; existing outputs are errors unless overwrite is
// set. Every command also writes config.<command>.json.
struct CommandOptions {
  bool overwrite = false;
  bool create_dirs = false;
};

void cmd_gen(const ExperimentConfig& cfg, const CommandOptions& opt);
TrainResult cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt,
                      const std::optional<std::filesystem::path>& resume = std::nullopt);
std::vector<SweepResult> cmd_sweep(const ExperimentConfig& cfg,
                                   const std::filesystem::path& checkpoint,
                                   const CommandOptions& opt);
std::vector<CompareEntry> cmd_compare(const ExperimentConfig& cfg,
                                      const std::filesystem::path& checkpoint,
                                      const CommandOptions& opt);
struct DiagnoseResult {
  struct Row {
    int layer = 0;
    double tau = 0.0;
    CorrectnessAccuracy acc;
  };
  std::vector<Row> correctness;
  struct Rank {
    int layer = 0;
    Homogeneity rho;
  };
  std::vector<Rank> spearman;  // empty without a no-PN checkpoint
};
DiagnoseResult cmd_diagnose(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                            const std::optional<std::filesystem::path>& checkpoint_no_pn,
                            const CommandOptions& opt);
ShiftReport cmd_shift(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                      const CommandOptions& opt);

}  // namespace exitlab

#endif  // EXITLAB_EXPERIMENT_HPP_
