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

// Inference-time exit decisions: the hybrid entropy + distance-ratio (EDR)
// indicator and the baseline strategies it is compared against.

#ifndef EXITLAB_EXITING_HPP_
#define EXITLAB_EXITING_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "exitlab/data.hpp"
#include "exitlab/model.hpp"
#include "exitlab/prototypes.hpp"

namespace exitlab {

enum class PolicyKind { kEdr, kEntropy, kPatience, kConfidencePatience, kOracle, kFixedLayer };

std::string_view to_string(PolicyKind k);
PolicyKind policy_kind_from_string(std::string_view s);

struct ExitPolicy {
  PolicyKind kind = PolicyKind::kEdr;
  double tau = 0.5;     // edr, entropy, confidence_patience
  double lambda = 1.0;  // edr
  int patience = 2;     // patience, confidence_patience
  int fixed_layer = 1;  // fixed_layer, 1-based

  void validate(int num_layers) const;
};

// Indicators observed at one layer. dr and edr are NaN where they were not
// computed (last layer, or policies that do not need distances).
struct LayerRecord {
  double entropy = 0.0;
  double dr = 0.0;
  double edr = 0.0;
  int predicted = 0;
};

struct ExitTrace {
  int exit_layer = 0;  // 1-based
  int predicted = 0;
  std::vector<LayerRecord> per_layer;  // exactly exit_layer entries
};

// Top-2 classes by probability; ties resolve toward the lower class index.
std::pair<int, int> top_two(std::span<const double> probs);

// Indicators for one evaluated layer. Distances are computed only when
// `with_distance` is set and the layer has a metric-space output.
LayerRecord layer_record(const LayerOutput& out, const PrototypeBank& bank, int layer_index,
                         bool with_distance, double lambda);

// Incremental exit rule: feed layers in order, stop when observe() is true.
class ExitDecider {
 public:
  ExitDecider(const ExitPolicy& policy, int num_layers, std::optional<int> label);
  // `layer` is 1-based. The last layer always returns true.
  bool observe(int layer, const LayerRecord& rec);

 private:
  ExitPolicy policy_;
  int num_layers_;
  std::optional<int> label_;
  int streak_ = 0;
  int last_pred_ = -1;
};

// Counts backbone blocks actually executed.
struct ComputeCounter {
  std::uint64_t blocks = 0;
};

// Evaluates layers in order and stops at the exit layer; nothing past it is
// computed. Oracle policies need the label.
ExitTrace infer_one(const Model& model, const PrototypeBank& bank, const Vec& x,
                    const ExitPolicy& policy, std::optional<int> label = std::nullopt,
                    ComputeCounter* counter = nullptr);

// infer_one over every sample. `labels` is empty or one per input.
std::vector<ExitTrace> infer_batch(const Model& model, const PrototypeBank& bank,
                                   std::span<const Vec> inputs, const ExitPolicy& policy,
                                   std::span<const int> labels = {},
                                   ComputeCounter* counter = nullptr);

// Indicators at all M layers (distances included for layers 1..M-1 when
// requested). dr/edr use the given lambda; the exit rule can re-derive edr.
std::vector<LayerRecord> full_profile(const Model& model, const PrototypeBank& bank,
                                      const Vec& x, bool with_distance, double lambda);

// Applies the exit rule to a precomputed profile. Gives the same trace as
// infer_one for the same model and input.
ExitTrace decide(std::span<const LayerRecord> profile, const ExitPolicy& policy,
                 std::optional<int> label = std::nullopt);

// One JSON object per line: exit_layer, predicted, per_layer[...].
void write_traces_jsonl(std::span<const ExitTrace> traces, const std::filesystem::path& path);
std::vector<ExitTrace> read_traces_jsonl(const std::filesystem::path& path);

}  // namespace exitlab

#endif  // EXITLAB_EXITING_HPP_
