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

// Evaluation engine: threshold sweeps, speed-up ratio, FLOPs accounting,
// correctness-estimation accuracy and rank-correlation diagnostics.

#ifndef EXITLAB_HARNESS_HPP_
#define EXITLAB_HARNESS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "exitlab/data.hpp"
#include "exitlab/exiting.hpp"
#include "exitlab/model.hpp"

namespace exitlab {

// Per-component inference cost in FLOPs (multiply-accumulate = 2).
struct FlopsModel {
  std::vector<double> backbone;  // per layer; layer 1 reads the raw input
  double classifier = 0.0;       // affine map + softmax
  double projection = 0.0;       // metric-space projection (0 without one)
  double edr_calc = 0.0;         // entropy, top-2, two distances, ratio, mean

  static FlopsModel from_config(const ModelConfig& cfg);
  int num_layers() const { return static_cast<int>(backbone.size()); }
};

// Cost of everything a trace executed: backbone + classifier at each layer up
// to the exit, plus projection and indicator at layers before M.
double flops_for_trace(const FlopsModel& flops, const ExitTrace& trace);

// sum_m M * N_m / sum_m m * N_m, with hist[m - 1] = N_m.
double speedup_ratio(std::span<const std::int64_t> exit_histogram);

struct SweepRow {
  double tau = 0.0;  // the swept parameter (see sweep())
  double accuracy = 0.0;
  double speedup = 1.0;
  double mean_exit_layer = 0.0;
  std::vector<std::int64_t> exit_histogram;  // index m-1 counts exits at layer m
  double flops_total = 0.0;
  std::int64_t executed_layers_total = 0;
};

struct SweepResult {
  ExitPolicy policy;  // template; its swept field varies per row
  int num_layers = 0;
  std::vector<SweepRow> rows;  // ascending in tau
};

// Per-layer indicators for every sample of a dataset.
struct ProfileSet {
  std::vector<std::vector<LayerRecord>> profiles;
  std::vector<int> labels;
  int num_layers = 0;
};

// Full forward of every sample; distance ratios only when `with_distance`.
ProfileSet profile_dataset(const Model& model, const PrototypeBank& bank, const Dataset& data,
                           bool with_distance);

// Returns `tmpl` with its swept parameter set to `value`: tau for edr,
// entropy and confidence_patience; patience for patience; fixed_layer for
// fixed_layer. Oracle ignores the value.
ExitPolicy with_parameter(const ExitPolicy& tmpl, double value);

// One row per value in `taus` (duplicates give duplicate rows).
SweepResult sweep(const ProfileSet& profiles, const FlopsModel& flops,
                  const ExitPolicy& tmpl, std::span<const double> taus);
SweepResult sweep(const Model& model, const PrototypeBank& bank, const Dataset& test,
                  const ExitPolicy& tmpl, std::span<const double> taus);

// Aggregates a set of traces into a row.
SweepRow summarize(std::span<const ExitTrace> traces, std::span<const int> labels,
                   const FlopsModel& flops, double tau);

// Row with speed-up closest to target (ties: lower tau). Returns nullopt when
// no row is within tol.
std::optional<SweepRow> match_speedup(const SweepResult& sweep, double target, double tol);

struct CorrectnessAccuracy {
  double entropy = 0.0;
  double edr = 0.0;
};

// At `layer` (1-based, < M): estimate "correct" iff indicator < tau and
// score the estimate against argmax == label.
CorrectnessAccuracy correctness_estimation_accuracy(const Model& model, const PrototypeBank& bank,
                                                    const Dataset& test, int layer, double tau,
                                                    double lambda);
CorrectnessAccuracy correctness_estimation_accuracy(const ProfileSet& profiles, int layer,
                                                    double tau, double lambda);

// Spearman rank correlation (average ranks for ties). nullopt when either
// series is constant.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

struct Homogeneity {
  std::optional<double> with_projection;
  std::optional<double> without_projection;
};

// Rank correlation between entropy and distance ratio at `layer` for a model
// with a projection head and one whose distances use raw hidden states.
Homogeneity spearman_homogeneity(const Model& with_pn, const PrototypeBank& bank_with,
                                 const Model& without_pn, const PrototypeBank& bank_without,
                                 const Dataset& test, int layer);

// The default tau grid: 33 points over [0, 1] plus a few fine low-end points.
std::vector<double> default_tau_grid();

}  // namespace exitlab

#endif  // EXITLAB_HARNESS_HPP_
