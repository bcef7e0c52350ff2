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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "exitlab/data.hpp"
#include "exitlab/error.hpp"

using namespace exitlab;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p, std::ios::trunc) << content;
  return p;
}

bool same_samples(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].y != b[i].y || a[i].x != b[i].x) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("well separated data is linearly separable") {
  DatasetSpec s;
  s.input_dim = 2;
  s.num_classes = 2;
  s.easy_fraction = 1.0;
  s.easy_margin = 10.0;
  s.hard_offset = 0.0;
  s.n_train = 2000;
  s.n_dev = 100;
  s.n_test = 2000;
  const Splits d = generate(s);
  // Reference linear fit: least squares on +-1 targets.
  const Mat x = stack_inputs(d.train);
  Mat a(x.cols(), 3);
  a.leftCols(2) = x.transpose();
  a.col(2).setOnes();
  Vec t(x.cols());
  for (Eigen::Index n = 0; n < x.cols(); ++n) t(n) = d.train[static_cast<std::size_t>(n)].y ? 1 : -1;
  const Vec w = a.colPivHouseholderQr().solve(t);
  int correct = 0;
  for (const auto& smp : d.test) {
    correct += (w(0) * smp.x(0) + w(1) * smp.x(1) + w(2) > 0) == (smp.y == 1);
  }
  CHECK(correct / static_cast<double>(d.test.size()) >= 0.999);
}

TEST_CASE("generation is deterministic per seed") {
  DatasetSpec s;
  s.n_train = 300;
  s.n_dev = 50;
  s.n_test = 80;
  const Splits a = generate(s), b = generate(s);
  CHECK(same_samples(a.train, b.train));
  CHECK(same_samples(a.dev, b.dev));
  CHECK(same_samples(a.test, b.test));
  s.seed = 43;
  CHECK_FALSE(same_samples(generate(s).train, a.train));
}

TEST_CASE("full label noise flips every binary label") {
  DatasetSpec s;
  s.n_train = 1000;
  s.n_dev = 10;
  s.n_test = 10;
  const Splits clean = generate(s);
  s.label_noise = 1.0;
  const Splits noisy = generate(s);
  int agree = 0;
  for (std::size_t i = 0; i < clean.train.size(); ++i) {
    REQUIRE(clean.train[i].x == noisy.train[i].x);
    agree += clean.train[i].y == noisy.train[i].y;
  }
  CHECK(agree == 0);
}

TEST_CASE("splits are sized, disjoint and balanced") {
  DatasetSpec s;
  s.num_classes = 3;
  s.input_dim = 5;
  s.n_train = 3000;
  s.n_dev = 300;
  s.n_test = 600;
  const Splits d = generate(s);
  CHECK(d.train.size() == 3000);
  CHECK(d.dev.size() == 300);
  CHECK(d.test.size() == 600);

  std::set<std::vector<double>> seen;
  for (const Dataset* part : {&d.train, &d.dev, &d.test}) {
    for (const auto& smp : *part) {
      CHECK(seen.insert(std::vector<double>(smp.x.data(), smp.x.data() + smp.x.size())).second);
    }
  }

  std::vector<int> counts(3, 0);
  for (const auto& smp : d.train) {
    REQUIRE(smp.y >= 0);
    REQUIRE(smp.y < 3);
    ++counts[static_cast<std::size_t>(smp.y)];
  }
  const double n = 3000, p = 1.0 / 3.0, sigma = std::sqrt(n * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - n * p) <= 5 * sigma);
}

TEST_CASE("shift translates only the test split") {
  DatasetSpec s;
  s.input_dim = 4;
  s.n_train = 50;
  s.n_dev = 20;
  s.n_test = 30;
  const Splits base = generate(s);
  s.shift = {1.0, -2.0, 0.0, 0.5};
  const Splits moved = generate(s);
  CHECK(same_samples(base.train, moved.train));
  CHECK(same_samples(base.dev, moved.dev));
  const Vec delta = Vec::Map(s.shift.data(), 4);
  for (std::size_t i = 0; i < base.test.size(); ++i) {
    CHECK((moved.test[i].x - base.test[i].x - delta).norm() < 1e-12);
  }
  s.shift = {1.0};
  CHECK_THROWS_AS(generate(s), ValidationError);
}

TEST_CASE("invalid specs are rejected") {
  auto bad = [](auto mutate) {
    DatasetSpec s;
    mutate(s);
    return s;
  };
  CHECK_THROWS_AS(generate(bad([](DatasetSpec& s) { s.n_train = 0; })), ValidationError);
  CHECK_THROWS_AS(generate(bad([](DatasetSpec& s) { s.num_classes = 1; })), ValidationError);
  CHECK_THROWS_AS(generate(bad([](DatasetSpec& s) { s.easy_fraction = 1.5; })), ValidationError);
  CHECK_THROWS_AS(generate(bad([](DatasetSpec& s) { s.label_noise = -0.1; })), ValidationError);
  CHECK_THROWS_AS(generate(bad([](DatasetSpec& s) { s.hard_margin = 0.0; })), ValidationError);
  CHECK_THROWS_AS(generate(bad([](DatasetSpec& s) { s.hard_offset = -1.0; })), ValidationError);
  CHECK_THROWS_AS(generate(bad([](DatasetSpec& s) {
                    s.input_dim = 2;
                    s.num_classes = 3;
                  })),
                  ValidationError);
}

TEST_CASE("simplex vertices are equidistant unit vectors") {
  for (int k = 2; k <= 6; ++k) {
    const Mat v = simplex_vertices(k, k + 1);
    REQUIRE(v.cols() == k);
    double edge = -1;
    for (int i = 0; i < k; ++i) {
      CHECK(v.col(i).norm() == doctest::Approx(1.0));
      for (int j = i + 1; j < k; ++j) {
        const double dij = (v.col(i) - v.col(j)).norm();
        if (edge < 0) edge = dij;
        CHECK(dij == doctest::Approx(edge));
      }
    }
  }
  CHECK_THROWS_AS(simplex_vertices(4, 2), ValidationError);
}

TEST_CASE("JSONL round trip") {
  DatasetSpec s;
  s.n_train = 100;
  s.n_dev = 1;
  s.n_test = 1;
  const Dataset d = generate(s).train;
  const fs::path p = fs::temp_directory_path() / "exitlab_data.jsonl";
  save_dataset(d, p);
  const Dataset back = load_dataset(p);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].y == d[i].y);
    CHECK((back[i].x - d[i].x).cwiseAbs().maxCoeff() <= 1e-12);
  }
  fs::remove(p);
}

TEST_CASE("malformed JSONL names the offending line") {
  const fs::path p = temp_file("exitlab_bad.jsonl",
                               "{\"x\": [1, 2], \"y\": 0}\n{\"x\": [1, 2], \"y\": 1.5}\n");
  try {
    load_dataset(p);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  const fs::path q = temp_file("exitlab_ragged.jsonl",
                               "{\"x\": [1, 2], \"y\": 0}\n{\"x\": [1], \"y\": 1}\n");
  CHECK_THROWS_AS(load_dataset(q), ParseError);
  const fs::path r = temp_file("exitlab_garbage.jsonl", "{\"x\": [1, 2], \"y\": 0}\nnot json\n");
  CHECK_THROWS_AS(load_dataset(r), ParseError);
  const fs::path e = temp_file("exitlab_empty.jsonl", "");
  CHECK(load_dataset(e).empty());
  CHECK_THROWS_AS(load_dataset(fs::temp_directory_path() / "exitlab_absent.jsonl"), IoError);
  for (const auto& f : {p, q, r, e}) fs::remove(f);
}

TEST_CASE("hashed text features") {
  const Vec a = hash_text("the cat sat", 8);
  CHECK(a.norm() == doctest::Approx(1.0));
  CHECK(hash_text("the cat sat", 8) == a);
  CHECK(hash_text("sat the  cat", 8) == a);
  CHECK(hash_text("", 8).norm() == 0.0);
  CHECK_THROWS_AS(hash_text("x", 0), ValidationError);

  const fs::path p = temp_file("exitlab_text.csv", "text,label\nhello world,1\ngood bye,0\n");
  const Dataset d = load_text_csv(p, 16);
  REQUIRE(d.size() == 2);
  CHECK(d[0].y == 1);
  CHECK(d[1].x == hash_text("good bye", 16));
  const fs::path q = temp_file("exitlab_text_bad.csv", "text,label\nhello,world\n");
  CHECK_THROWS_AS(load_text_csv(q, 16), ParseError);
  fs::remove(p);
  fs::remove(q);
}
