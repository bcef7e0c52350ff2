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

// Mini-batch training of the multi-exit model with prototype updates and
// distance-aware regularization.

#ifndef EXITLAB_TRAINING_HPP_
#define EXITLAB_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "exitlab/data.hpp"
#include "exitlab/losses.hpp"
#include "exitlab/model.hpp"
#include "exitlab/optimizer.hpp"
#include "exitlab/prototypes.hpp"

namespace exitlab {

struct TrainConfig {
  double alpha = 0.1;  // DAR weight
  DarConfig dar;
  double gamma = 0.5;  // prototype sliding-average strength
  int batch_size = 32;
  double learning_rate = 1e-2;
  double weight_decay = 0.01;
  int total_steps = 2000;
  std::uint64_t seed = 0;
  int eval_every = 200;

  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;  // 1-based
  double lr = 0.0;
  double total_loss = 0.0;
  std::vector<double> ce;   // per layer
  std::vector<double> dar;  // per intermediate layer
  std::optional<double> dev_accuracy;  // final-layer accuracy, when evaluated
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::int64_t best_step = 0;
  double best_dev_accuracy = 0.0;

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

inline bool operator==(const StepRecord& a, const StepRecord& b) {
  return a.step == b.step && a.lr == b.lr && a.total_loss == b.total_loss && a.ce == b.ce &&
         a.dar == b.dar && a.dev_accuracy == b.dev_accuracy;
}

// Observation points inside a training step, for tests and tooling.
struct StepEvent {
  enum class Stage { kBeforeOptimizer, kAfterOptimizer };
  Stage stage;
  std::int64_t step;  // 1-based
  std::span<const std::size_t> batch;  // training-set indices of the batch
  const Model& model;
  const PrototypeBank& bank;
};
// Return false to stop training after the current step.
using StepHook = std::function<bool(const StepEvent&)>;

struct TrainResult {
  Checkpoint final_state;
  Checkpoint best_state;  // best final-layer dev accuracy
  TrainReport report;
};

// A fresh bank sized for `model`.
PrototypeBank make_bank(const ModelConfig& cfg, double gamma);

// Runs steps start_step+1 .. cfg.total_steps. Batches come from an
// epoch-wise seeded shuffle; resuming replays the sampler so the batch
// sequence matches an uninterrupted run. Optimizer moments start at zero.
TrainResult train(Model model, PrototypeBank bank, const Dataset& train_set,
                  const Dataset& dev_set, const TrainConfig& cfg,
                  std::int64_t start_step = 0, const StepHook& hook = {});

// Accuracy of the argmax prediction at every layer.
std::vector<double> layer_accuracies(const Model& model, const Dataset& data);
double final_layer_accuracy(const Model& model, const Dataset& data);

}  // namespace exitlab

#endif  // EXITLAB_TRAINING_HPP_
