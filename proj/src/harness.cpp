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

#include "exitlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "exitlab/error.hpp"
#include "exitlab/metrics.hpp"

namespace exitlab {

FlopsModel FlopsModel::from_config(const ModelConfig& cfg) {
  cfg.validate();
  const double h = cfg.hidden_dim;
  const double k = cfg.num_classes;
  const double d = cfg.metric_dim();
  FlopsModel f;
  for (int m = 0; m < cfg.num_layers; ++m) {
    const double fan_in = m == 0 ? cfg.input_dim : cfg.hidden_dim;
    f.backbone.push_back(2.0 * fan_in * h + h /*bias*/ + h /*activation*/);
  }
  f.classifier = 2.0 * h * k + k + 3.0 * k /*softmax: exp, sum, divide*/;
  f.projection = cfg.use_projection ? 2.0 * h * cfg.proto_dim + cfg.proto_dim : 0.0;
  // entropy (3K) + top-2 (2K) + two cosine distances (3 dots of length d
  // each, plus norms/division) + ratio (4) + harmonic mean (5)
  f.edr_calc = 3.0 * k + 2.0 * k + 2.0 * (6.0 * d + 4.0) + 4.0 + 5.0;
  return f;
}

double flops_for_trace(const FlopsModel& flops, const ExitTrace& trace) {
  const int layers = flops.num_layers();
  if (trace.exit_layer < 1 || trace.exit_layer > layers) {
    throw ValidationError("flops_for_trace: exit layer outside 1..M");
  }
  double total = 0.0;
  for (int m = 1; m <= trace.exit_layer; ++m) {
    total += flops.backbone[static_cast<std::size_t>(m - 1)] + flops.classifier;
    if (m < layers) total += flops.projection + flops.edr_calc;
  }
  return total;
}

double speedup_ratio(std::span<const std::int64_t> exit_histogram) {
  const auto layers = static_cast<double>(exit_histogram.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < exit_histogram.size(); ++i) {
    if (exit_histogram[i] < 0) throw ValidationError("speedup_ratio: negative count");
    const auto n = static_cast<double>(exit_histogram[i]);
    num += layers * n;
    den += static_cast<double>(i + 1) * n;
  }
  if (den <= 0.0) throw ValidationError("speedup_ratio: empty histogram");
  return num / den;
}

ProfileSet profile_dataset(const Model& model, const PrototypeBank& bank, const Dataset& data,
                           bool with_distance) {
  ProfileSet ps;
  ps.num_layers = model.config().num_layers;
  ps.profiles.reserve(data.size());
  for (const auto& s : data) {
    ps.profiles.push_back(full_profile(model, bank, s.x, with_distance, 1.0));
    ps.labels.push_back(s.y);
  }
  return ps;
}

ExitPolicy with_parameter(const ExitPolicy& tmpl, double value) {
  ExitPolicy p = tmpl;
  switch (tmpl.kind) {
    case PolicyKind::kEdr:
    case PolicyKind::kEntropy:
    case PolicyKind::kConfidencePatience:
      p.tau = value;
      break;
    case PolicyKind::kPatience:
      p.patience = static_cast<int>(std::lround(value));
      break;
    case PolicyKind::kFixedLayer:
      p.fixed_layer = static_cast<int>(std::lround(value));
      break;
    case PolicyKind::kOracle:
      break;
  }
  return p;
}

SweepRow summarize(std::span<const ExitTrace> traces, std::span<const int> labels,
                   const FlopsModel& flops, double tau) {
  if (traces.empty()) throw ValidationError("summarize: no traces");
  if (labels.size() != traces.size()) throw ShapeError("summarize: labels/traces mismatch");
  SweepRow row;
  row.tau = tau;
  row.exit_histogram.assign(static_cast<std::size_t>(flops.num_layers()), 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    if (t.exit_layer < 1 || t.exit_layer > flops.num_layers()) {
      throw ValidationError("summarize: exit layer outside 1..M");
    }
    ++row.exit_histogram[static_cast<std::size_t>(t.exit_layer - 1)];
    row.executed_layers_total += t.exit_layer;
    row.flops_total += flops_for_trace(flops, t);
    correct += t.predicted == labels[i] ? 1 : 0;
  }
  const auto n = static_cast<double>(traces.size());
  row.accuracy = static_cast<double>(correct) / n;
  row.mean_exit_layer = static_cast<double>(row.executed_layers_total) / n;
  row.speedup = speedup_ratio(row.exit_histogram);
  return row;
}

SweepResult sweep(const ProfileSet& profiles, const FlopsModel& flops, const ExitPolicy& tmpl,
                  std::span<const double> taus) {
  if (taus.empty()) throw ValidationError("sweep: no thresholds given");
  if (profiles.profiles.empty()) throw ValidationError("sweep: empty test set");
  if (flops.num_layers() != profiles.num_layers) {
    throw ShapeError("sweep: FLOPs model and profiles disagree on depth");
  }
  std::vector<double> sorted(taus.begin(), taus.end());
  std::stable_sort(sorted.begin(), sorted.end());
  SweepResult out;
  out.policy = tmpl;
  out.num_layers = profiles.num_layers;
  std::vector<ExitTrace> traces(profiles.profiles.size());
  for (double tau : sorted) {
    const ExitPolicy policy = with_parameter(tmpl, tau);
    for (std::size_t i = 0; i < profiles.profiles.size(); ++i) {
      traces[i] = decide(profiles.profiles[i], policy, profiles.labels[i]);
    }
    out.rows.push_back(summarize(traces, profiles.labels, flops, tau));
  }
  return out;
}

SweepResult sweep(const Model& model, const PrototypeBank& bank, const Dataset& test,
                  const ExitPolicy& tmpl, std::span<const double> taus) {
  const bool with_distance = tmpl.kind == PolicyKind::kEdr;
  return sweep(profile_dataset(model, bank, test, with_distance),
               FlopsModel::from_config(model.config()), tmpl, taus);
}

std::optional<SweepRow> match_speedup(const SweepResult& sweep, double target, double tol) {
  const SweepRow* best = nullptr;
  double best_gap = 0.0;
  for (const auto& row : sweep.rows) {
    const double gap = std::abs(row.speedup - target);
    if (gap > tol) continue;
    // Rows are ascending in tau, so strict '<' keeps the lower tau on ties.
    if (best == nullptr || gap < best_gap) {
      best = &row;
      best_gap = gap;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

CorrectnessAccuracy correctness_estimation_accuracy(const ProfileSet& profiles, int layer,
                                                    double tau, double lambda) {
  if (layer < 1 || layer >= profiles.num_layers) {
    throw ValidationError("correctness estimation: layer must lie in 1..M-1");
  }
  if (profiles.profiles.empty()) throw ValidationError("correctness estimation: no samples");
  std::size_t hit_entropy = 0;
  std::size_t hit_edr = 0;
  for (std::size_t i = 0; i < profiles.profiles.size(); ++i) {
    const LayerRecord& r = profiles.profiles[i][static_cast<std::size_t>(layer - 1)];
    const bool correct = r.predicted == profiles.labels[i];
    if (std::isnan(r.dr)) throw ValidationError("correctness estimation: missing distances");
    const double e = metrics::edr(r.entropy, r.dr, lambda);
    hit_entropy += (r.entropy < tau) == correct ? 1 : 0;
    hit_edr += (e < tau) == correct ? 1 : 0;
  }
  const auto n = static_cast<double>(profiles.profiles.size());
  return {static_cast<double>(hit_entropy) / n, static_cast<double>(hit_edr) / n};
}

CorrectnessAccuracy correctness_estimation_accuracy(const Model& model, const PrototypeBank& bank,
                                                    const Dataset& test, int layer, double tau,
                                                    double lambda) {
  if (layer < 1 || layer >= model.config().num_layers) {
    throw ValidationError("correctness estimation: layer must lie in 1..M-1");
  }
  return correctness_estimation_accuracy(profile_dataset(model, bank, test, true), layer, tau,
                                         lambda);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: series differ in length");
  if (a.size() < 2) return std::nullopt;
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("spearman: series differ in length");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

Homogeneity spearman_homogeneity(const Model& with_pn, const PrototypeBank& bank_with,
                                 const Model& without_pn, const PrototypeBank& bank_without,
                                 const Dataset& test, int layer) {
  if (without_pn.config().use_projection) {
    throw ValidationError("spearman_homogeneity: second model must not use a projection head");
  }
  auto rho = [&](const Model& model, const PrototypeBank& bank) {
    const ProfileSet ps = profile_dataset(model, bank, test, true);
    if (layer < 1 || layer >= ps.num_layers) {
      throw ValidationError("spearman_homogeneity: layer must lie in 1..M-1");
    }
    std::vector<double> ent;
    std::vector<double> dr;
    for (const auto& p : ps.profiles) {
      ent.push_back(p[static_cast<std::size_t>(layer - 1)].entropy);
      dr.push_back(p[static_cast<std::size_t>(layer - 1)].dr);
    }
    return spearman(ent, dr);
  };
  return {rho(with_pn, bank_with), rho(without_pn, bank_without)};
}

std::vector<double> default_tau_grid() {
  std::vector<double> taus;
  for (int i = 0; i <= 32; ++i) taus.push_back(static_cast<double>(i) / 32.0);
  for (double t : {0.001, 0.007, 0.01, 0.07, 0.14}) taus.push_back(t);
  std::sort(taus.begin(), taus.end());
  return taus;
}

}  // namespace exitlab
