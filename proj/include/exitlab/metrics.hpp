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

// Exit indicators shared by training, inference and the benchmark harness.
// All functions are pure.

#ifndef EXITLAB_METRICS_HPP_
#define EXITLAB_METRICS_HPP_

#include <span>

namespace exitlab::metrics {

inline constexpr double kProbEpsilon = 1e-12;  // clamp before log
inline constexpr double kNormEpsilon = 1e-9;   // smallest usable vector norm
inline constexpr double kSumTolerance = 1e-6;  // allowed |sum(p) - 1|

// Entropy of `probs` divided by log(K): 0 for one-hot, 1 for uniform.
// Throws ValidationError for K < 2, negative entries or sum(p) != 1.
double normalized_entropy(std::span<const double> probs);

// 1 - cos(u, v), clamped to [0, 2]. Both inputs need norm > kNormEpsilon.
double cosine_distance(std::span<const double> u, std::span<const double> v);

// Gradient of cosine_distance(u, v) with respect to u, written into `grad`.
void cosine_distance_grad(std::span<const double> u, std::span<const double> v,
                          std::span<double> grad);

// Distances from a representation to the prototypes of the two most
// probable classes (r1: top class, r2: runner-up).
struct DistancePair {
  double r1 = 0.0;
  double r2 = 0.0;
};

// 0.5 * (1 + (r1 - r2) / max(r1, r2)). Below 0.5 when the representation
// sits closer to the predicted class. Returns 0.5 when both are ~0.
double distance_ratio(DistancePair d);

// Weighted harmonic mean (lambda + 1) / (lambda / dr + 1 / entropy).
// Returns 0 if either argument is below kProbEpsilon.
double edr(double entropy, double dr, double lambda);

}  // namespace exitlab::metrics

#endif  // EXITLAB_METRICS_HPP_
