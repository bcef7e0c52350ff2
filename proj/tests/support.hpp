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

// Shared oracles for the unit and acceptance tests: small random instances
// and central finite differences.

#ifndef EXITLAB_TESTS_SUPPORT_HPP_
#define EXITLAB_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "exitlab/data.hpp"
#include "exitlab/model.hpp"
#include "exitlab/prototypes.hpp"
#include "exitlab/training.hpp"

namespace exitlab::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;
inline constexpr double kFdAbsFloor = 1e-7;

// Relative error with an absolute floor for near-zero gradients.
inline bool grads_agree(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= kFdAbsFloor) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) <= kFdRelTol;
}

inline Vec random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

inline Mat random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

// M <= 3, dims <= 8, K in {2, 3}.
inline ModelConfig random_small_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> layers(2, 3), classes(2, 3), dim(2, 8);
  ModelConfig c;
  c.num_layers = layers(rng);
  c.num_classes = classes(rng);
  c.input_dim = dim(rng);
  c.hidden_dim = dim(rng);
  c.proto_dim = dim(rng);
  c.seed = rng();
  return c;
}

// Every prototype set to a random vector.
inline PrototypeBank random_bank(int layers, int classes, int dim, std::mt19937_64& rng) {
  PrototypeBank b(layers, classes, dim);
  for (int m = 0; m < layers; ++m)
    for (int k = 0; k < classes; ++k) b.set_prototype(m, k, random_vec(dim, rng));
  return b;
}

inline std::vector<int> random_labels(int n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = pick(rng);
  return y;
}

struct FdReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_rel = 0.0;
};

inline void fd_record(FdReport& r, double analytic, double numeric) {
  ++r.checked;
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kFdAbsFloor});
  r.worst_rel = std::max(r.worst_rel, diff / scale);
  if (!grads_agree(analytic, numeric)) ++r.failed;
}

// Every parameter gradient from backward() against central differences of
// batch_loss().
inline FdReport check_parameter_gradients(const Model& model, const Mat& inputs,
                                          std::span<const int> labels,
                                          const PrototypeBank& bank, const LossConfig& loss) {
  FdReport rep;
  const BackwardResult br = backward(model, inputs, labels, bank, loss);
  Model probe = model;
  auto views = tensors(probe.mutable_params());
  const auto grads = tensors(br.grads);
  for (std::size_t t = 0; t < views.size(); ++t) {
    for (std::size_t j = 0; j < views[t].size; ++j) {
      double& p = views[t].data[j];
      const double saved = p;
      p = saved + kFdStep;
      const double up = batch_loss(probe, inputs, labels, bank, loss);
      p = saved - kFdStep;
      const double down = batch_loss(probe, inputs, labels, bank, loss);
      p = saved;
      fd_record(rep, grads[t].data[j], (up - down) / (2.0 * kFdStep));
    }
  }
  return rep;
}

// DAR representation gradient against central differences of its loss.
inline FdReport check_dar_gradients(const DarConfig& cfg, const Mat& reps,
                                    std::span<const int> labels, const PrototypeBank& bank,
                                    int layer_index, std::span<const double> weights = {}) {
  FdReport rep;
  const DarResult base = dar(cfg, reps, labels, bank, layer_index, weights);
  Mat probe = reps;
  for (Eigen::Index c = 0; c < reps.cols(); ++c) {
    for (Eigen::Index r = 0; r < reps.rows(); ++r) {
      const double saved = probe(r, c);
      probe(r, c) = saved + kFdStep;
      const double up = dar(cfg, probe, labels, bank, layer_index, weights).loss;
      probe(r, c) = saved - kFdStep;
      const double down = dar(cfg, probe, labels, bank, layer_index, weights).loss;
      probe(r, c) = saved;
      fd_record(rep, base.grads(r, c), (up - down) / (2.0 * kFdStep));
    }
  }
  return rep;
}

struct TrainedFixture {
  Model model;
  PrototypeBank bank;
  Dataset test;
};

// A small model (M=4, K=2) trained briefly on generated data; built once per binary.
inline const TrainedFixture& small_trained() {
  static const TrainedFixture t = [] {
    DatasetSpec s;
    s.input_dim = 6;
    s.n_train = 600;
    s.n_dev = 100;
    s.n_test = 150;
    s.seed = 11;
    const Splits d = generate(s);
    ModelConfig mc;
    mc.num_layers = 4;
    mc.num_classes = 2;
    mc.input_dim = 6;
    mc.hidden_dim = 12;
    mc.proto_dim = 6;
    mc.seed = 2;
    TrainConfig tc;
    tc.total_steps = 150;
    tc.dar = {DarVariant::kCombined, 1.0};
    const auto r = train(Model(mc), make_bank(mc, tc.gamma), d.train, d.dev, tc);
    return TrainedFixture{Model(mc, r.final_state.params), r.final_state.bank, d.test};
  }();
  return t;
}

}  // namespace exitlab::testing

#endif  // EXITLAB_TESTS_SUPPORT_HPP_
