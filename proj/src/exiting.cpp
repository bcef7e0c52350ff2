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

#include "exitlab/exiting.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include "json.hpp"
#include <string>

#include "exitlab/error.hpp"
#include "exitlab/metrics.hpp"

namespace exitlab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool uses_tau(PolicyKind k) {
  return k == PolicyKind::kEdr || k == PolicyKind::kEntropy ||
         k == PolicyKind::kConfidencePatience;
}

}  // namespace

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::kEdr: return "edr";
    case PolicyKind::kEntropy: return "entropy";
    case PolicyKind::kPatience: return "patience";
    case PolicyKind::kConfidencePatience: return "confidence_patience";
    case PolicyKind::kOracle: return "oracle";
    case PolicyKind::kFixedLayer: return "fixed_layer";
  }
  return "?";
}

PolicyKind policy_kind_from_string(std::string_view s) {
  for (auto k : {PolicyKind::kEdr, PolicyKind::kEntropy, PolicyKind::kPatience,
                 PolicyKind::kConfidencePatience, PolicyKind::kOracle, PolicyKind::kFixedLayer}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown exit policy '" + std::string(s) + "'");
}

void ExitPolicy::validate(int num_layers) const {
  if (uses_tau(kind) && !(tau >= 0.0 && tau <= 1.0)) {
    throw ValidationError("policy: tau must lie in [0, 1]");
  }
  if (kind == PolicyKind::kEdr && !(lambda > 0.0 && std::isfinite(lambda))) {
    throw ValidationError("policy: lambda must be > 0");
  }
  if ((kind == PolicyKind::kPatience || kind == PolicyKind::kConfidencePatience) &&
      patience < 1) {
    throw ValidationError("policy: patience must be >= 1");
  }
  if (kind == PolicyKind::kFixedLayer && (fixed_layer < 1 || fixed_layer > num_layers)) {
    throw ValidationError("policy: fixed layer outside 1..M");
  }
}

std::pair<int, int> top_two(std::span<const double> probs) {
  if (probs.size() < 2) throw ValidationError("top_two: need at least 2 classes");
  int first = 0;
  int second = -1;
  for (int k = 1; k < static_cast<int>(probs.size()); ++k) {
    const double p = probs[static_cast<std::size_t>(k)];
    if (p > probs[static_cast<std::size_t>(first)]) {
      second = first;
      first = k;
    } else if (second < 0 || p > probs[static_cast<std::size_t>(second)]) {
      second = k;
    }
  }
  return {first, second};
}

LayerRecord layer_record(const LayerOutput& out, const PrototypeBank& bank, int layer_index,
                         bool with_distance, double lambda) {
  LayerRecord r;
  const auto probs = as_span(out.probs);
  r.entropy = metrics::normalized_entropy(probs);
  r.predicted = top_two(probs).first;
  r.dr = kNaN;
  r.edr = kNaN;
  if (with_distance && out.projected.size() > 0) {
    const auto [k1, k2] = top_two(probs);
    const auto q = as_span(out.projected);
    const metrics::DistancePair d{
        metrics::cosine_distance(q, as_span(bank.prototype(layer_index, k1))),
        metrics::cosine_distance(q, as_span(bank.prototype(layer_index, k2)))};
    r.dr = metrics::distance_ratio(d);
    r.edr = metrics::edr(r.entropy, r.dr, lambda);
  }
  return r;
}

ExitDecider::ExitDecider(const ExitPolicy& policy, int num_layers, std::optional<int> label)
    : policy_(policy), num_layers_(num_layers), label_(label) {
  policy_.validate(num_layers);
  if (policy.kind == PolicyKind::kOracle && !label) {
    throw ValidationError("oracle policy needs the ground-truth label");
  }
}

bool ExitDecider::observe(int layer, const LayerRecord& rec) {
  bool exit = false;
  switch (policy_.kind) {
    case PolicyKind::kEdr:
      // No metric space at the last layer; it exits unconditionally below.
      exit = !std::isnan(rec.edr) && rec.edr < policy_.tau;
      break;
    case PolicyKind::kEntropy:
      exit = rec.entropy < policy_.tau;
      break;
    case PolicyKind::kPatience:
      streak_ = rec.predicted == last_pred_ ? streak_ + 1 : 1;
      last_pred_ = rec.predicted;
      exit = streak_ >= policy_.patience;
      break;
    case PolicyKind::kConfidencePatience:
      streak_ = rec.entropy < policy_.tau ? streak_ + 1 : 0;
      exit = streak_ >= policy_.patience;
      break;
    case PolicyKind::kOracle:
      exit = rec.predicted == *label_;
      break;
    case PolicyKind::kFixedLayer:
      exit = layer >= policy_.fixed_layer;
      break;
  }
  return exit || layer >= num_layers_;
}

ExitTrace infer_one(const Model& model, const PrototypeBank& bank, const Vec& x,
                    const ExitPolicy& policy, std::optional<int> label,
                    ComputeCounter* counter) {
  const int layers = model.config().num_layers;
  ExitDecider decider(policy, layers, label);
  if (x.size() != model.config().input_dim) throw ShapeError("infer: input dimension mismatch");
  const bool with_distance = policy.kind == PolicyKind::kEdr;
  ExitTrace trace;
  Vec h = x;
  for (int m = 0; m < layers; ++m) {
    LayerOutput out = model.layer(m, h);
    if (counter != nullptr) ++counter->blocks;
    const LayerRecord rec = layer_record(out, bank, m, with_distance, policy.lambda);
    trace.per_layer.push_back(rec);
    if (decider.observe(m + 1, rec)) {
      trace.exit_layer = m + 1;
      trace.predicted = rec.predicted;
      return trace;
    }
    h = std::move(out.hidden);
  }
  throw Error("infer_one: exit rule never fired");  // unreachable
}

std::vector<ExitTrace> infer_batch(const Model& model, const PrototypeBank& bank,
                                   std::span<const Vec> inputs, const ExitPolicy& policy,
                                   std::span<const int> labels, ComputeCounter* counter) {
  if (!labels.empty() && labels.size() != inputs.size()) {
    throw ShapeError("infer_batch: labels and inputs differ in length");
  }
  std::vector<ExitTrace> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::optional<int> y = labels.empty() ? std::nullopt : std::optional<int>(labels[i]);
    out.push_back(infer_one(model, bank, inputs[i], policy, y, counter));
  }
  return out;
}

std::vector<LayerRecord> full_profile(const Model& model, const PrototypeBank& bank,
                                      const Vec& x, bool with_distance, double lambda) {
  const auto outs = model.forward(x);
  std::vector<LayerRecord> prof;
  prof.reserve(outs.size());
  for (std::size_t m = 0; m < outs.size(); ++m) {
    prof.push_back(layer_record(outs[m], bank, static_cast<int>(m), with_distance, lambda));
  }
  return prof;
}

ExitTrace decide(std::span<const LayerRecord> profile, const ExitPolicy& policy,
                 std::optional<int> label) {
  const int layers = static_cast<int>(profile.size());
  ExitDecider decider(policy, layers, label);
  ExitTrace trace;
  for (int m = 0; m < layers; ++m) {
    LayerRecord rec = profile[static_cast<std::size_t>(m)];
    if (policy.kind == PolicyKind::kEdr) {
      if (!std::isnan(rec.dr)) rec.edr = metrics::edr(rec.entropy, rec.dr, policy.lambda);
    } else {
      rec.dr = kNaN;
      rec.edr = kNaN;
    }
    trace.per_layer.push_back(rec);
    if (decider.observe(m + 1, rec)) {
      trace.exit_layer = m + 1;
      trace.predicted = rec.predicted;
      return trace;
    }
  }
  throw ValidationError("decide: empty profile");
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

}  // namespace

void write_traces_jsonl(std::span<const ExitTrace> traces, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& t : traces) {
    nlohmann::json j;
    j["exit_layer"] = t.exit_layer;
    j["predicted"] = t.predicted;
    auto& arr = j["per_layer"] = nlohmann::json::array();
    for (const auto& r : t.per_layer) {
      arr.push_back({{"entropy", r.entropy},
                     {"dr", number_or_null(r.dr)},
                     {"edr", number_or_null(r.edr)},
                     {"predicted", r.predicted}});
    }
    f << j.dump() << '\n';
  }
}

std::vector<ExitTrace> read_traces_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<ExitTrace> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ExitTrace t;
      t.exit_layer = j.at("exit_layer").get<int>();
      t.predicted = j.at("predicted").get<int>();
      for (const auto& r : j.at("per_layer")) {
        t.per_layer.push_back({r.at("entropy").get<double>(), number_or_nan(r.at("dr")),
                               number_or_nan(r.at("edr")), r.at("predicted").get<int>()});
      }
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

}  // namespace exitlab
