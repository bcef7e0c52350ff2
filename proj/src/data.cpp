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

#include "exitlab/data.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include "json.hpp"
#include <random>
#include <string>

#include "exitlab/error.hpp"

namespace exitlab {

void DatasetSpec::validate() const {
  if (num_classes < 2) throw ValidationError("dataset: num_classes must be >= 2");
  if (input_dim < num_classes - 1) {
    throw ValidationError("dataset: input_dim must be >= num_classes - 1");
  }
  if (n_train < 1 || n_dev < 1 || n_test < 1) {
    throw ValidationError("dataset: n_train, n_dev and n_test must be >= 1");
  }
  if (!(easy_fraction >= 0.0 && easy_fraction <= 1.0)) {
    throw ValidationError("dataset: easy_fraction must lie in [0, 1]");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) {
    throw ValidationError("dataset: label_noise must lie in [0, 1]");
  }
  if (!(easy_margin > 0.0) || !(hard_margin > 0.0)) {
    throw ValidationError("dataset: margins must be > 0");
  }
  if (!(hard_offset >= 0.0) || !std::isfinite(hard_offset)) {
    throw ValidationError("dataset: hard_offset must be finite and >= 0");
  }
  if (hard_offset > 0.0 && input_dim < num_classes) {
    throw ValidationError("dataset: hard_offset > 0 needs input_dim >= num_classes");
  }
  if (!shift.empty() && static_cast<int>(shift.size()) != input_dim) {
    throw ValidationError("dataset: shift must have input_dim entries");
  }
}

DatasetSpec easy_preset() {
  DatasetSpec s;
  s.n_train = 2000;
  s.n_dev = 500;
  s.n_test = 500;
  s.easy_fraction = 1.0;
  s.easy_margin = 6.0;
  s.hard_offset = 0.0;
  return s;
}

Mat simplex_vertices(int num_classes, int dim) {
  if (num_classes < 2 || dim < num_classes - 1) {
    throw ValidationError("simplex_vertices: need dim >= num_classes - 1");
  }
  const int k = num_classes;
  // The centered standard basis of R^K spans a (K-1)-dim subspace; express
  // it in an orthonormal basis of that subspace.
  Mat centered = Mat::Identity(k, k);
  centered.rowwise() -= centered.colwise().mean();
  Eigen::HouseholderQR<Mat> qr(centered);
  const Mat basis = qr.householderQ() * Mat::Identity(k, k - 1);
  Mat coords = basis.transpose() * centered;  // (K-1) x K
  for (Eigen::Index c = 0; c < coords.cols(); ++c) coords.col(c).normalize();
  Mat out = Mat::Zero(dim, k);
  out.topRows(k - 1) = coords;
  return out;
}

namespace {

// splitmix64 finalizer; turns (seed, stream tag) into independent seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Mat random_rotation(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Mat g(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) g(r, c) = n01(rng);
  }
  Eigen::HouseholderQR<Mat> qr(g);
  return qr.householderQ();
}

struct Geometry {
  Mat easy_means;  // input_dim x K
  Mat hard_means;
};

Geometry make_geometry(const DatasetSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, 0));
  const int k = spec.num_classes;
  const Mat simplex = simplex_vertices(k, spec.input_dim);
  // Unit-norm simplex vertices are sqrt(2K/(K-1)) apart.
  const double edge = std::sqrt(2.0 * k / (k - 1.0));
  const Mat rot_easy = random_rotation(spec.input_dim, rng);
  Mat easy = rot_easy * simplex * (spec.easy_margin / edge);
  Mat shifted(simplex.rows(), k);
  for (int c = 0; c < k; ++c) shifted.col(c) = simplex.col((c + 1) % k);
  Mat hard = rot_easy * shifted * (spec.hard_margin / edge);
  if (spec.hard_offset > 0.0) {
    // The simplex spans the first K-1 coordinates, so the last rotated axis
    // is orthogonal to it.
    hard.colwise() += Vec(rot_easy.col(spec.input_dim - 1) * spec.hard_offset);
  }
  return {easy, hard};
}

Dataset draw(const DatasetSpec& spec, const Geometry& geo, int n, std::uint64_t tag,
             bool apply_shift) {
  std::mt19937_64 rng(derive_seed(spec.seed, tag));
  // Replacement labels come from their own stream so inputs do not depend on label_noise.
  std::mt19937_64 noise_rng(derive_seed(spec.seed, tag + 0x100));
  std::uniform_int_distribution<int> pick_class(0, spec.num_classes - 1);
  std::uniform_int_distribution<int> pick_other(0, spec.num_classes - 2);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  Dataset out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Sample s;
    const int y = pick_class(rng);
    const bool easy = u01(rng) < spec.easy_fraction;
    s.x = easy ? Vec(geo.easy_means.col(y)) : Vec(geo.hard_means.col(y));
    for (int d = 0; d < spec.input_dim; ++d) s.x(d) += n01(rng);
    s.y = y;
    if (u01(rng) < spec.label_noise) {
      const int other = pick_other(noise_rng);
      s.y = other >= y ? other + 1 : other;
    }
    if (apply_shift && !spec.shift.empty()) {
      for (int d = 0; d < spec.input_dim; ++d) s.x(d) += spec.shift[static_cast<std::size_t>(d)];
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Splits generate(const DatasetSpec& spec) {
  spec.validate();
  const Geometry geo = make_geometry(spec);
  return {draw(spec, geo, spec.n_train, 1, false), draw(spec, geo, spec.n_dev, 2, false),
          draw(spec, geo, spec.n_test, 3, true)};
}

void save_dataset(const Dataset& samples, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& s : samples) {
    nlohmann::json j;
    j["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
    j["y"] = s.y;
    f << j.dump() << '\n';
  }
  if (!f) throw IoError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open dataset " + path.string());
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  Eigen::Index dim = -1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("x") || !j.contains("y")) {
      throw ParseError(lineno, "expected an object with fields x and y");
    }
    if (!j["y"].is_number_integer()) throw ParseError(lineno, "y must be an integer");
    if (!j["x"].is_array()) throw ParseError(lineno, "x must be an array");
    Sample s;
    s.y = j["y"].get<int>();
    if (s.y < 0) throw ParseError(lineno, "y must be >= 0");
    const auto& xs = j["x"];
    s.x.resize(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i].is_number()) throw ParseError(lineno, "x must contain only numbers");
      s.x(static_cast<Eigen::Index>(i)) = xs[i].get<double>();
    }
    if (dim < 0) dim = s.x.size();
    if (s.x.size() != dim) {
      throw ParseError(lineno, "x has dimension " + std::to_string(s.x.size()) +
                                   ", earlier lines have " + std::to_string(dim));
    }
    out.push_back(std::move(s));
  }
  return out;
}

Vec hash_text(std::string_view text, int dim) {
  if (dim < 1) throw ValidationError("hash_text: dim must be >= 1");
  Vec v = Vec::Zero(dim);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) break;
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (std::size_t j = start; j < i; ++j) {
      h ^= static_cast<unsigned char>(text[j]);
      h *= 1099511628211ULL;
    }
    v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim))) += 1.0;
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

namespace {

// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace

Dataset load_text_csv(const std::filesystem::path& path, int dim) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw ParseError(1, "missing header row");
  Dataset out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 2) throw ParseError(lineno, "expected 2 columns (text, label)");
    std::size_t used = 0;
    int y = 0;
    try {
      y = std::stoi(fields[1], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != fields[1].size() || y < 0) {
      throw ParseError(lineno, "label must be a non-negative integer");
    }
    out.push_back({hash_text(fields[0], dim), y});
  }
  return out;
}

Mat stack_inputs(std::span<const Sample> samples) {
  if (samples.empty()) return Mat();
  Mat m(samples.front().x.size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != m.rows()) throw ShapeError("stack_inputs: ragged samples");
    m.col(static_cast<Eigen::Index>(i)) = samples[i].x;
  }
  return m;
}

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(s.y);
  return y;
}

}  // namespace exitlab
