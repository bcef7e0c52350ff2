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

#include "exitlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "exitlab/error.hpp"

namespace exitlab {

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ValidationError("train: alpha must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("train: gamma must lie in (0, 1]");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ValidationError("train: learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("train: weight_decay must be >= 0");
  if (total_steps < 1) throw ValidationError("train: total_steps must be >= 1");
  if (eval_every < 1) throw ValidationError("train: eval_every must be >= 1");
  if (!(dar.beta >= 0.0)) throw ValidationError("train: beta must be >= 0");
}

PrototypeBank make_bank(const ModelConfig& cfg, double gamma) {
  return PrototypeBank(cfg.num_layers - 1, cfg.num_classes, cfg.metric_dim(), gamma);
}

namespace {

// Epoch-wise shuffling without replacement; the last batch of an epoch may
// be short.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed)
      : order_(n), batch_(batch), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (pos_ >= order_.size()) reshuffle();
    const std::size_t end = std::min(order_.size(), pos_ + batch_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace

std::vector<double> layer_accuracies(const Model& model, const Dataset& data) {
  const int layers = model.config().num_layers;
  std::vector<double> acc(static_cast<std::size_t>(layers), 0.0);
  if (data.empty()) return acc;
  const BatchForward f = forward_batch(model, stack_inputs(data));
  for (int m = 0; m < layers; ++m) {
    const Mat& p = f.probs[static_cast<std::size_t>(m)];
    std::size_t correct = 0;
    for (Eigen::Index n = 0; n < p.cols(); ++n) {
      Eigen::Index arg = 0;
      p.col(n).maxCoeff(&arg);
      correct += static_cast<int>(arg) == data[static_cast<std::size_t>(n)].y ? 1 : 0;
    }
    acc[static_cast<std::size_t>(m)] =
        static_cast<double>(correct) / static_cast<double>(data.size());
  }
  return acc;
}

double final_layer_accuracy(const Model& model, const Dataset& data) {
  return layer_accuracies(model, data).back();
}

TrainResult train(Model model, PrototypeBank bank, const Dataset& train_set,
                  const Dataset& dev_set, const TrainConfig& cfg, std::int64_t start_step,
                  const StepHook& hook) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  if (start_step < 0 || start_step > cfg.total_steps) {
    throw ValidationError("train: start step outside [0, total_steps]");
  }
  if (bank.num_layers() != mc.num_layers - 1 || bank.num_classes() != mc.num_classes ||
      bank.dim() != mc.metric_dim()) {
    throw ShapeError("train: prototype bank does not match model config");
  }
  for (const auto& s : train_set) {
    if (s.x.size() != mc.input_dim) throw ShapeError("train: sample dimension mismatch");
    if (s.y < 0 || s.y >= mc.num_classes) throw ValidationError("train: label out of range");
  }
  bank.set_gamma(cfg.gamma);

  BatchSampler sampler(train_set.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed);
  for (std::int64_t t = 0; t < start_step; ++t) sampler.next();

  AdamW opt(model.params(), AdamWOptions{0.9, 0.999, 1e-8, cfg.weight_decay});
  LossConfig loss{cfg.alpha, cfg.dar, {}};

  TrainResult result;
  auto snapshot = [&](std::int64_t step) {
    return Checkpoint{mc, model.params(), bank, static_cast<std::uint64_t>(step)};
  };
  result.best_state = snapshot(start_step);
  result.report.best_step = start_step;
  result.report.best_dev_accuracy = dev_set.empty() ? 0.0 : final_layer_accuracy(model, dev_set);

  Mat inputs;
  std::vector<int> labels;
  for (std::int64_t t = start_step; t < cfg.total_steps; ++t) {
    const std::int64_t step = t + 1;
    const auto batch = sampler.next();
    inputs.resize(mc.input_dim, static_cast<Eigen::Index>(batch.size()));
    labels.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      inputs.col(static_cast<Eigen::Index>(i)) = train_set[batch[i]].x;
      labels[i] = train_set[batch[i]].y;
    }

    const BatchForward fwd = forward_batch(model, inputs);
    // Prototypes move only here, from the current batch, before DAR.
    for (int m = 0; m + 1 < mc.num_layers; ++m) {
      update_prototypes(bank, m, fwd.proj[static_cast<std::size_t>(m)], labels);
    }
    const BackwardResult br = backward(model, inputs, labels, bank, loss, &fwd);
    if (!std::isfinite(br.total_loss)) {
      throw NumericError("train: non-finite loss at step " + std::to_string(step));
    }

    const double lr = linear_decay_lr(cfg.learning_rate, t, cfg.total_steps);
    if (hook) hook({StepEvent::Stage::kBeforeOptimizer, step, batch, model, bank});
    opt.step(model.mutable_params(), br.grads, lr);
    for (const auto& tv : tensors(model.params())) {
      for (std::size_t j = 0; j < tv.size; ++j) {
        if (!std::isfinite(tv.data[j])) {
          throw NumericError("train: parameter " + tv.name + " became non-finite at step " +
                             std::to_string(step));
        }
      }
    }

    StepRecord rec{step, lr, br.total_loss, br.ce, br.dar, std::nullopt};
    if (!dev_set.empty() && (step % cfg.eval_every == 0 || step == cfg.total_steps)) {
      const double acc = final_layer_accuracy(model, dev_set);
      rec.dev_accuracy = acc;
      if (acc > result.report.best_dev_accuracy) {
        result.report.best_dev_accuracy = acc;
        result.report.best_step = step;
        result.best_state = snapshot(step);
      }
    }
    result.report.steps.push_back(std::move(rec));
    const bool keep_going =
        !hook || hook({StepEvent::Stage::kAfterOptimizer, step, batch, model, bank});
    if (!keep_going) {
      result.final_state = snapshot(step);
      if (dev_set.empty()) result.best_state = result.final_state;
      return result;
    }
  }
  result.final_state = snapshot(cfg.total_steps);
  if (dev_set.empty()) {
    result.best_state = result.final_state;
    result.report.best_step = cfg.total_steps;
  }
  return result;
}

}  // namespace exitlab
