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

#include "exitlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "exitlab/error.hpp"

namespace exitlab::metrics {
namespace {

struct Norms {
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
};

Norms dot_and_norms(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine_distance: dimension mismatch (" +
                     std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()) + ")");
  }
  Norms n;
  for (std::size_t i = 0; i < u.size(); ++i) {
    n.dot += u[i] * v[i];
    n.uu += u[i] * u[i];
    n.vv += v[i] * v[i];
  }
  if (std::sqrt(n.uu) <= kNormEpsilon || std::sqrt(n.vv) <= kNormEpsilon) {
    throw NumericError("cosine_distance: zero-norm input");
  }
  return n;
}

}  // namespace

double normalized_entropy(std::span<const double> probs) {
  const std::size_t k = probs.size();
  if (k < 2) throw ValidationError("normalized_entropy: need at least 2 classes");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("normalized_entropy: probability outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw ValidationError("normalized_entropy: probabilities do not sum to 1");
  }
  double acc = 0.0;
  for (double p : probs) {
    const double q = std::max(p, kProbEpsilon);
    acc += q * std::log(q);
  }
  // Numerator and denominator are both <= 0.
  const double h = acc / std::log(1.0 / static_cast<double>(k));
  return std::clamp(h, 0.0, 1.0);
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  const Norms n = dot_and_norms(u, v);
  const double cos = n.dot / (std::sqrt(n.uu) * std::sqrt(n.vv));
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

void cosine_distance_grad(std::span<const double> u, std::span<const double> v,
                          std::span<double> grad) {
  if (grad.size() != u.size()) throw ShapeError("cosine_distance_grad: bad output size");
  const Norms n = dot_and_norms(u, v);
  const double nu = std::sqrt(n.uu);
  const double nv = std::sqrt(n.vv);
  // d/du [1 - u.v / (|u||v|)] = -(v / (|u||v|) - (u.v) u / (|u|^3 |v|))
  const double a = 1.0 / (nu * nv);
  const double b = n.dot / (n.uu * nu * nv);
  for (std::size_t i = 0; i < u.size(); ++i) grad[i] = -(a * v[i] - b * u[i]);
}

double distance_ratio(DistancePair d) {
  if (!(d.r1 >= 0.0 && d.r1 <= 2.0 && d.r2 >= 0.0 && d.r2 <= 2.0)) {
    throw ValidationError("distance_ratio: distances must lie in [0, 2]");
  }
  const double m = std::max(d.r1, d.r2);
  if (m < kNormEpsilon) return 0.5;
  return std::clamp(0.5 * (1.0 + (d.r1 - d.r2) / m), 0.0, 1.0);
}

double edr(double entropy, double dr, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("edr: lambda must be a positive finite number");
  }
  if (entropy < kProbEpsilon || dr < kProbEpsilon) return 0.0;
  const double v = (lambda + 1.0) / (lambda / dr + 1.0 / entropy);
  return std::clamp(v, std::min(entropy, dr), std::max(entropy, dr));
}

}  // namespace exitlab::metrics
