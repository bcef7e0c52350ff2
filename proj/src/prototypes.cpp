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

#include "exitlab/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "exitlab/error.hpp"
#include "exitlab/metrics.hpp"

namespace exitlab {

PrototypeBank::PrototypeBank(int num_layers, int num_classes, int dim,
                             double gamma)
    : num_layers_(num_layers), num_classes_(num_classes), dim_(dim) {
  if (num_layers < 1 || num_classes < 2 || dim < 1) {
    throw ValidationError("PrototypeBank: need >= 1 layer, >= 2 classes, dim >= 1");
  }
  set_gamma(gamma);
  const auto n = static_cast<std::size_t>(num_layers * num_classes);
  protos_.assign(n, Vec::Zero(dim));
  init_.assign(n, 0);
}

void PrototypeBank::set_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ValidationError("PrototypeBank: gamma must lie in (0, 1]");
  }
  gamma_ = gamma;
}

void PrototypeBank::check_index(int layer_index, int k) const {
  if (layer_index < 0 || layer_index >= num_layers_ || k < 0 || k >= num_classes_) {
    throw ValidationError("PrototypeBank: index out of range (layer " +
                          std::to_string(layer_index) + ", class " +
                          std::to_string(k) + ")");
  }
}

bool PrototypeBank::initialized(int layer_index, int k) const {
  check_index(layer_index, k);
  return init_[static_cast<std::size_t>(layer_index * num_classes_ + k)] != 0;
}

int PrototypeBank::initialized_count(int layer_index) const {
  int n = 0;
  for (int k = 0; k < num_classes_; ++k) n += initialized(layer_index, k) ? 1 : 0;
  return n;
}

const Vec& PrototypeBank::prototype(int layer_index, int k) const {
  if (!initialized(layer_index, k)) {
    throw UninitializedPrototypeError("prototype for class " + std::to_string(k) +
                                      " at layer index " +
                                      std::to_string(layer_index) +
                                      " is not initialized");
  }
  return at(layer_index, k);
}

void PrototypeBank::set_prototype(int layer_index, int k, const Vec& value) {
  check_index(layer_index, k);
  if (value.size() != dim_) throw ShapeError("PrototypeBank: prototype dimension mismatch");
  if (!value.allFinite()) throw NumericError("PrototypeBank: non-finite prototype");
  if (value.norm() <= metrics::kNormEpsilon) {
    throw NumericError("PrototypeBank: prototype norm is zero");
  }
  at(layer_index, k) = value;
  init_[static_cast<std::size_t>(layer_index * num_classes_ + k)] = 1;
}

void PrototypeBank::set_raw(int layer_index, int k, const Vec& value,
                            bool initialized) {
  check_index(layer_index, k);
  if (value.size() != dim_) throw ShapeError("PrototypeBank: prototype dimension mismatch");
  at(layer_index, k) = value;
  init_[static_cast<std::size_t>(layer_index * num_classes_ + k)] = initialized ? 1 : 0;
}

bool operator==(const PrototypeBank& a, const PrototypeBank& b) {
  if (a.num_layers_ != b.num_layers_ || a.num_classes_ != b.num_classes_ ||
      a.dim_ != b.dim_ || a.gamma_ != b.gamma_ || a.init_ != b.init_) {
    return false;
  }
  for (std::size_t i = 0; i < a.protos_.size(); ++i) {
    if (!(a.protos_[i].array() == b.protos_[i].array()).all()) return false;
  }
  return true;
}

namespace {

void check_batch(const Mat& reps, std::span<const int> labels,
                 const PrototypeBank& bank, int layer_index,
                 std::span<const double> weights) {
  if (reps.rows() != bank.dim()) {
    throw ShapeError("representation dimension " + std::to_string(reps.rows()) +
                     " does not match prototype dimension " +
                     std::to_string(bank.dim()));
  }
  if (static_cast<std::size_t>(reps.cols()) != labels.size()) {
    throw ShapeError("representations and labels differ in length");
  }
  if (!weights.empty() && weights.size() != labels.size()) {
    throw ShapeError("sample weights and labels differ in length");
  }
  if (layer_index < 0 || layer_index >= bank.num_layers()) {
    throw ValidationError("layer index out of range");
  }
  for (int y : labels) {
    if (y < 0 || y >= bank.num_classes()) throw ValidationError("label out of range");
  }
}

double weight_of(std::span<const double> weights, Eigen::Index n) {
  return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(n)];
}

void finish_average(DarResult& r) {
  if (r.used == 0) return;
  const double inv = 1.0 / static_cast<double>(r.used);
  r.loss *= inv;
  r.grads *= inv;
}

}  // namespace

void update_prototypes(PrototypeBank& bank, int layer_index, const Mat& reps,
                       std::span<const int> labels) {
  check_batch(reps, labels, bank, layer_index, {});
  const int k_count = bank.num_classes();
  Mat sums = Mat::Zero(bank.dim(), k_count);
  std::vector<int> counts(static_cast<std::size_t>(k_count), 0);
  for (Eigen::Index n = 0; n < reps.cols(); ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    sums.col(y) += reps.col(n);
    ++counts[static_cast<std::size_t>(y)];
  }
  const double g = bank.gamma();
  for (int k = 0; k < k_count; ++k) {
    const int c = counts[static_cast<std::size_t>(k)];
    if (c == 0) continue;
    const Vec centroid = sums.col(k) / static_cast<double>(c);
    if (!bank.initialized(layer_index, k)) {
      bank.set_prototype(layer_index, k, centroid);
    } else {
      bank.set_prototype(layer_index, k,
                         (1.0 - g) * bank.prototype(layer_index, k) + g * centroid);
    }
  }
}

DarResult dar_center(const Mat& reps, std::span<const int> labels,
                     const PrototypeBank& bank, int layer_index,
                     std::span<const double> weights) {
  check_batch(reps, labels, bank, layer_index, weights);
  DarResult r;
  r.grads = Mat::Zero(reps.rows(), reps.cols());
  Vec g(reps.rows());
  for (Eigen::Index n = 0; n < reps.cols(); ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    if (!bank.initialized(layer_index, y)) continue;
    const Vec& cp = bank.prototype(layer_index, y);
    const double w = weight_of(weights, n);
    r.loss += w * metrics::cosine_distance(col_span(reps, n), as_span(cp));
    metrics::cosine_distance_grad(col_span(reps, n), as_span(cp),
                                  {g.data(), static_cast<std::size_t>(g.size())});
    r.grads.col(n) = w * g;
    ++r.used;
  }
  finish_average(r);
  return r;
}

DarResult dar_alienation(const Mat& reps, std::span<const int> labels,
                         const PrototypeBank& bank, int layer_index,
                         std::span<const double> weights) {
  check_batch(reps, labels, bank, layer_index, weights);
  if (bank.initialized_count(layer_index) < 2) {
    throw UninitializedPrototypeError(
        "alienation loss needs at least 2 initialized prototypes");
  }
  DarResult r;
  r.grads = Mat::Zero(reps.rows(), reps.cols());
  Vec gy(reps.rows());
  Vec gz(reps.rows());
  for (Eigen::Index n = 0; n < reps.cols(); ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    if (!bank.initialized(layer_index, y)) continue;
    const auto x = col_span(reps, n);
    const Vec& cy = bank.prototype(layer_index, y);
    const double ry = metrics::cosine_distance(x, as_span(cy));
    int z = -1;
    double rz = std::numeric_limits<double>::infinity();
    for (int k = 0; k < bank.num_classes(); ++k) {
      if (k == y || !bank.initialized(layer_index, k)) continue;
      const double d = metrics::cosine_distance(x, as_span(bank.prototype(layer_index, k)));
      if (d < rz) {
        rz = d;
        z = k;
      }
    }
    const double w = weight_of(weights, n);
    double term = 0.5;
    double d_ry = 0.0;
    double d_rz = 0.0;
    if (std::max(ry, rz) >= metrics::kNormEpsilon) {
      if (ry > rz) {  // term = 1 - 0.5 rz / ry
        term = 1.0 - 0.5 * rz / ry;
        d_ry = 0.5 * rz / (ry * ry);
        d_rz = -0.5 / ry;
      } else {  // term = 0.5 ry / rz
        term = 0.5 * ry / rz;
        d_ry = 0.5 / rz;
        d_rz = -0.5 * ry / (rz * rz);
      }
    }
    r.loss += w * term;
    metrics::cosine_distance_grad(x, as_span(cy),
                                  {gy.data(), static_cast<std::size_t>(gy.size())});
    metrics::cosine_distance_grad(x, as_span(bank.prototype(layer_index, z)),
                                  {gz.data(), static_cast<std::size_t>(gz.size())});
    r.grads.col(n) = w * (d_ry * gy + d_rz * gz);
    ++r.used;
  }
  finish_average(r);
  return r;
}

DarResult dar_combined(const Mat& reps, std::span<const int> labels,
                       const PrototypeBank& bank, int layer_index, double beta,
                       std::span<const double> weights) {
  if (!(beta >= 0.0)) throw ValidationError("combined DAR: beta must be >= 0");
  DarResult c = dar_center(reps, labels, bank, layer_index, weights);
  if (beta == 0.0) return c;
  const DarResult a = dar_alienation(reps, labels, bank, layer_index, weights);
  c.loss += beta * a.loss;
  c.grads += beta * a.grads;
  return c;
}

DarResult dar(const DarConfig& cfg, const Mat& reps, std::span<const int> labels,
              const PrototypeBank& bank, int layer_index,
              std::span<const double> weights) {
  switch (cfg.variant) {
    case DarVariant::kCenter:
      return dar_center(reps, labels, bank, layer_index, weights);
    case DarVariant::kAlienation:
      return dar_alienation(reps, labels, bank, layer_index, weights);
    case DarVariant::kCombined:
      return dar_combined(reps, labels, bank, layer_index, cfg.beta, weights);
  }
  throw ValidationError("unknown DAR variant");
}

std::string_view to_string(DarVariant v) {
  switch (v) {
    case DarVariant::kCenter: return "center";
    case DarVariant::kAlienation: return "alienation";
    case DarVariant::kCombined: return "combined";
  }
  return "?";
}

DarVariant dar_variant_from_string(std::string_view s) {
  if (s == "center") return DarVariant::kCenter;
  if (s == "alienation") return DarVariant::kAlienation;
  if (s == "combined") return DarVariant::kCombined;
  throw ValidationError("unknown DAR variant '" + std::string(s) + "'");
}

namespace {

double assign(const std::vector<Vec>& centers, const Mat& reps,
              std::vector<int>& owner) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < reps.cols(); ++n) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double d = metrics::cosine_distance(col_span(reps, n), as_span(centers[k]));
      if (d < best_d) {  // ties go to the lower class index
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    owner[static_cast<std::size_t>(n)] = best;
    total += best_d;
  }
  return total;
}

}  // namespace

KMeansResult adjust_prototypes_kmeans(const PrototypeBank& bank, int layer_index,
                                      const Mat& unlabeled_reps, int max_iters,
                                      double tol) {
  if (layer_index < 0 || layer_index >= bank.num_layers()) {
    throw ValidationError("kmeans: layer index out of range");
  }
  if (unlabeled_reps.cols() == 0) throw ValidationError("kmeans: no samples");
  if (unlabeled_reps.rows() != bank.dim()) throw ShapeError("kmeans: dimension mismatch");
  if (max_iters < 0 || !(tol >= 0.0)) throw ValidationError("kmeans: bad iteration limits");
  const int k_count = bank.num_classes();
  std::vector<Vec> centers;
  for (int k = 0; k < k_count; ++k) centers.push_back(bank.prototype(layer_index, k));

  KMeansResult out{bank, 0, {}};
  std::vector<int> owner(static_cast<std::size_t>(unlabeled_reps.cols()));
  out.objective.push_back(assign(centers, unlabeled_reps, owner));
  for (int it = 0; it < max_iters; ++it) {
    Mat sums = Mat::Zero(bank.dim(), k_count);
    std::vector<int> counts(static_cast<std::size_t>(k_count), 0);
    for (Eigen::Index n = 0; n < unlabeled_reps.cols(); ++n) {
      const int k = owner[static_cast<std::size_t>(n)];
      sums.col(k) += unlabeled_reps.col(n);
      ++counts[static_cast<std::size_t>(k)];
    }
    double max_move = 0.0;
    for (int k = 0; k < k_count; ++k) {
      const int c = counts[static_cast<std::size_t>(k)];
      if (c == 0) continue;
      Vec next = sums.col(k) / static_cast<double>(c);
      // A mean at the origin has no direction; keep the old center.
      if (next.norm() <= metrics::kNormEpsilon) continue;
      max_move = std::max(max_move, (next - centers[static_cast<std::size_t>(k)]).norm());
      centers[static_cast<std::size_t>(k)] = std::move(next);
    }
    ++out.iterations;
    out.objective.push_back(assign(centers, unlabeled_reps, owner));
    if (max_move < tol) break;
  }
  for (int k = 0; k < k_count; ++k) {
    out.bank.set_prototype(layer_index, k, centers[static_cast<std::size_t>(k)]);
  }
  return out;
}

}  // namespace exitlab
