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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "exitlab/error.hpp"
#include "exitlab/metrics.hpp"
#include "exitlab/model.hpp"
#include "support.hpp"

using namespace exitlab;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny(int layers, int in, int hid, int proto, int k = 2) {
  ModelConfig c;
  c.num_layers = layers;
  c.num_classes = k;
  c.input_dim = in;
  c.hidden_dim = hid;
  c.proto_dim = proto;
  c.seed = 17;
  return c;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / name; }

std::vector<char> read_all(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_all(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("zero parameters give uniform predictions") {
  const ModelConfig cfg = tiny(3, 4, 5, 3, 4);
  const Model m(cfg, init_parameters(cfg).zeros_like());
  Vec x = Vec::LinSpaced(4, -1, 2);
  for (const auto& out : m.forward(x)) {
    for (Eigen::Index k = 0; k < 4; ++k) CHECK(out.probs(k) == doctest::Approx(0.25));
  }
}

TEST_CASE("hand-computed trace through a two-layer network") {
  const ModelConfig cfg = tiny(2, 1, 1, 1);
  ParameterSet p = init_parameters(cfg);
  p.layers[0].backbone_w(0, 0) = 0.5;
  p.layers[0].backbone_b(0) = 0.1;
  p.layers[0].classifier_w << 1.0, -1.0;
  p.layers[0].classifier_b << 0.0, 0.2;
  p.layers[0].proj_w(0, 0) = 2.0;
  p.layers[0].proj_b(0) = -0.5;
  p.layers[1].backbone_w(0, 0) = -1.5;
  p.layers[1].backbone_b(0) = 0.0;
  p.layers[1].classifier_w << 2.0, 0.0;
  p.layers[1].classifier_b << 0.0, 0.0;
  const Model m(cfg, p);
  Vec x(1);
  x << 0.8;
  const auto out = m.forward(x);

  const double h1 = std::tanh(0.5 * 0.8 + 0.1);
  const double z0 = h1, z1 = -h1 + 0.2;
  const double p10 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
  const double h2 = std::tanh(-1.5 * h1);
  const double p20 = std::exp(2 * h2) / (std::exp(2 * h2) + 1.0);
  CHECK(out[0].hidden(0) == doctest::Approx(h1).epsilon(1e-14));
  CHECK(out[0].probs(0) == doctest::Approx(p10).epsilon(1e-14));
  CHECK(out[0].projected(0) == doctest::Approx(2 * h1 - 0.5).epsilon(1e-14));
  CHECK(out[1].hidden(0) == doctest::Approx(h2).epsilon(1e-14));
  CHECK(out[1].probs(0) == doctest::Approx(p20).epsilon(1e-14));
  CHECK(out[1].projected.size() == 0);
}

TEST_CASE("forward is deterministic and probabilities are distributions") {
  const ModelConfig cfg = tiny(4, 6, 8, 5, 3);
  const Model m(cfg);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Vec x = testing::random_vec(6, rng, 5.0);
    const auto a = m.forward(x), b = m.forward(x);
    for (std::size_t l = 0; l < a.size(); ++l) {
      CHECK(a[l].probs == b[l].probs);
      CHECK(a[l].hidden == b[l].hidden);
      CHECK(std::abs(a[l].probs.sum() - 1.0) < 1e-12);
      CHECK(a[l].probs.minCoeff() >= 0.0);
    }
  }
  CHECK_THROWS_AS(m.forward(Vec::Zero(5)), ShapeError);
}

TEST_CASE("batched forward agrees with per-sample forward") {
  const ModelConfig cfg = tiny(3, 4, 6, 3);
  const Model m(cfg);
  std::mt19937_64 rng(2);
  const Mat x = testing::random_mat(4, 5, rng);
  const BatchForward f = forward_batch(m, x);
  for (Eigen::Index n = 0; n < 5; ++n) {
    const auto out = m.forward(x.col(n));
    for (int l = 0; l < 3; ++l) {
      CHECK((f.probs[l].col(n) - out[l].probs).norm() < 1e-14);
      if (l < 2) CHECK((f.proj[l].col(n) - out[l].projected).norm() < 1e-14);
    }
  }
}

TEST_CASE("parameter gradients match finite differences") {
  std::mt19937_64 rng(3);
  const ModelConfig cfg = tiny(3, 4, 4, 4);
  const Model m(cfg);
  const Mat x = testing::random_mat(4, 4, rng);
  const auto y = testing::random_labels(4, 2, rng);
  const PrototypeBank bank = testing::random_bank(2, 2, 4, rng);
  for (DarVariant v : {DarVariant::kCenter, DarVariant::kAlienation, DarVariant::kCombined}) {
    LossConfig loss{0.3, {v, 0.5}, {}};
    const auto r = testing::check_parameter_gradients(m, x, y, bank, loss);
    CHECK(r.failed == 0);
  }
}

TEST_CASE("gradients over 20 random seeds, both activations") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    ModelConfig cfg = testing::random_small_config(rng);
    cfg.activation = seed % 2 ? Activation::kRelu : Activation::kTanh;
    cfg.use_projection = seed % 5 != 4;
    const Model m(cfg);
    const Mat x = testing::random_mat(cfg.input_dim, 1 + static_cast<int>(seed % 8), rng);
    const auto y = testing::random_labels(static_cast<int>(x.cols()), cfg.num_classes, rng);
    const PrototypeBank bank =
        testing::random_bank(cfg.num_layers - 1, cfg.num_classes, cfg.metric_dim(), rng);
    LossConfig loss{0.2, {DarVariant::kCombined, 1.0}, {}};
    CAPTURE(seed);
    try {
      const auto report = testing::check_parameter_gradients(m, x, y, bank, loss);
      CHECK(report.failed == 0);
    } catch (const NumericError&) {
      // Dead relu units can zero a representation; that must be the only cause.
      const BatchForward f = forward_batch(m, x);
      bool degenerate = false;
      for (int l = 0; l + 1 < cfg.num_layers; ++l) {
        const Mat& r = cfg.use_projection ? f.proj[l] : f.hidden[l];
        degenerate = degenerate || r.colwise().norm().minCoeff() == 0.0;
      }
      CHECK(degenerate);
    }
  }
}

TEST_CASE("doubling sample weights doubles the gradient") {
  std::mt19937_64 rng(4);
  const ModelConfig cfg = tiny(3, 3, 5, 4);
  const Model m(cfg);
  const Mat x = testing::random_mat(3, 6, rng);
  const auto y = testing::random_labels(6, 2, rng);
  const PrototypeBank bank = testing::random_bank(2, 2, 4, rng);
  LossConfig one{0.5, {DarVariant::kCenter, 1.0}, std::vector<double>(6, 1.0)};
  LossConfig two = one;
  two.sample_weights.assign(6, 2.0);
  const auto g1 = backward(m, x, y, bank, one), g2 = backward(m, x, y, bank, two);
  CHECK(g2.total_loss == 2.0 * g1.total_loss);
  const auto a = tensors(g1.grads), b = tensors(g2.grads);
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t j = 0; j < a[t].size; ++j) CHECK(b[t].data[j] == 2.0 * a[t].data[j]);
  }
}

TEST_CASE("saturated correct classifiers have tiny gradients") {
  const ModelConfig cfg = tiny(2, 1, 1, 1);
  ParameterSet p = init_parameters(cfg);
  for (auto& l : p.layers) {
    l.backbone_w.setConstant(1.0);
    l.backbone_b.setZero();
    l.classifier_w << 60.0, -60.0;
    l.classifier_b.setZero();
  }
  const Model m(cfg, p);
  Mat x(1, 2);
  x << 1.0, -1.0;
  const std::vector<int> y{0, 1};
  const PrototypeBank bank(1, 2, 1);
  const auto r = backward(m, x, y, bank, LossConfig{0.0, {}, {}});
  double norm2 = 0;
  for (const auto& t : tensors(r.grads)) {
    for (std::size_t j = 0; j < t.size; ++j) norm2 += t.data[j] * t.data[j];
  }
  CHECK(std::sqrt(norm2) < 1e-3);
}

TEST_CASE("backward leaves the bank alone") {
  std::mt19937_64 rng(5);
  const ModelConfig cfg = tiny(3, 4, 4, 3);
  const Model m(cfg);
  const PrototypeBank bank = testing::random_bank(2, 2, 3, rng);
  const PrototypeBank copy = bank;
  backward(m, testing::random_mat(4, 5, rng), testing::random_labels(5, 2, rng), bank,
           {0.5, {DarVariant::kCombined, 1.0}, {}});
  CHECK(bank == copy);
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::mt19937_64 rng(6);
  const ModelConfig cfg = tiny(3, 5, 7, 4, 3);
  Checkpoint ck{cfg, init_parameters(cfg), PrototypeBank(2, 3, 4, 0.5), 123};
  ck.bank.set_prototype(0, 1, testing::random_vec(4, rng));
  ck.bank.set_prototype(1, 2, testing::random_vec(4, rng));
  const fs::path path = temp_path("exitlab_roundtrip.ckpt");
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == ck.config);
  CHECK(back.params == ck.params);
  CHECK(back.bank == ck.bank);
  CHECK(back.step == 123);
  const Model a(ck.config, ck.params), b(back.config, back.params);
  for (int t = 0; t < 10; ++t) {
    const Vec x = testing::random_vec(5, rng);
    const auto oa = a.forward(x), ob = b.forward(x);
    for (std::size_t l = 0; l < oa.size(); ++l) CHECK(oa[l].probs == ob[l].probs);
  }
  fs::remove(path);
}

TEST_CASE("checkpoint corruption, truncation and future versions are rejected") {
  const ModelConfig cfg = tiny(2, 3, 3, 2);
  const Checkpoint ck{cfg, init_parameters(cfg), PrototypeBank(1, 2, 2), 0};
  const fs::path path = temp_path("exitlab_bad.ckpt");
  save_checkpoint(ck, path);
  const auto bytes = read_all(path);

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  write_all(path, truncated);
  CHECK_THROWS_AS(load_checkpoint(path), CorruptFileError);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  write_all(path, flipped);
  CHECK_THROWS_AS(load_checkpoint(path), CorruptFileError);

  auto magic = bytes;
  magic[0] = 'X';
  write_all(path, magic);
  CHECK_THROWS_AS(load_checkpoint(path), CorruptFileError);

  auto future = bytes;
  future[8] = static_cast<char>(kCheckpointVersion + 1);
  write_all(path, future);
  CHECK_THROWS_AS(load_checkpoint(path), VersionError);

  CHECK_THROWS_AS(load_checkpoint(temp_path("exitlab_missing.ckpt")), IoError);
  fs::remove(path);
}

TEST_CASE("parameters that disagree with the config are rejected") {
  const ModelConfig cfg = tiny(2, 3, 3, 2);
  ParameterSet p = init_parameters(cfg);
  p.layers[1].classifier_w.resize(3, 3);
  CHECK_THROWS_AS(check_shapes(cfg, p), ShapeError);
  CHECK_THROWS_AS(Model(cfg, p), ShapeError);
}
