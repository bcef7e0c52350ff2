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

// Per-layer class prototypes, the distance-aware regularizers (DAR) that pull
// projected representations toward them, and K-means re-centering of the
// prototypes on unlabeled data.

#ifndef EXITLAB_PROTOTYPES_HPP_
#define EXITLAB_PROTOTYPES_HPP_

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "exitlab/linalg.hpp"

namespace exitlab {

// Prototypes for layers 1..M-1 (stored at index 0..M-2), K classes each.
// A prototype is unusable until it has been initialized by a first update.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(int num_layers, int num_classes, int dim, double gamma = 0.5);

  int num_layers() const { return num_layers_; }
  int num_classes() const { return num_classes_; }
  int dim() const { return dim_; }
  double gamma() const { return gamma_; }
  void set_gamma(double gamma);

  bool initialized(int layer_index, int k) const;
  // Number of initialized classes at a layer.
  int initialized_count(int layer_index) const;
  // Throws UninitializedPrototypeError if the prototype was never set.
  const Vec& prototype(int layer_index, int k) const;

  // Overwrites a prototype and marks it initialized. Norm must be > 1e-9.
  void set_prototype(int layer_index, int k, const Vec& value);
  // Raw access for serialization.
  const Vec& raw(int layer_index, int k) const { return at(layer_index, k); }
  void set_raw(int layer_index, int k, const Vec& value, bool initialized);

  friend bool operator==(const PrototypeBank& a, const PrototypeBank& b);

 private:
  void check_index(int layer_index, int k) const;
  const Vec& at(int layer_index, int k) const {
    return protos_[static_cast<std::size_t>(layer_index * num_classes_ + k)];
  }
  Vec& at(int layer_index, int k) {
    return protos_[static_cast<std::size_t>(layer_index * num_classes_ + k)];
  }

  int num_layers_ = 0;
  int num_classes_ = 0;
  int dim_ = 0;
  double gamma_ = 0.5;
  std::vector<Vec> protos_;
  std::vector<std::uint8_t> init_;
};

// Sliding-average update: for every class present in the batch,
// cp_k <- (1 - gamma) cp_k + gamma * centroid_k. First sighting assigns the
// centroid directly. `reps` is dim x N.
void update_prototypes(PrototypeBank& bank, int layer_index, const Mat& reps,
                       std::span<const int> labels);

enum class DarVariant { kCenter, kAlienation, kCombined };

struct DarConfig {
  DarVariant variant = DarVariant::kCenter;
  double beta = 1.0;  // Combined only
};

std::string_view to_string(DarVariant v);
DarVariant dar_variant_from_string(std::string_view s);

// Loss and its gradient with respect to each representation column.
// Prototypes are treated as constants.
struct DarResult {
  double loss = 0.0;
  Mat grads;              // same shape as reps; zero for excluded samples
  std::size_t used = 0;   // samples that entered the average
};

// Optional `weights` scale each sample's term (empty = all ones). Samples
// whose class prototype is not yet initialized are left out of the average.
DarResult dar_center(const Mat& reps, std::span<const int> labels,
                     const PrototypeBank& bank, int layer_index,
                     std::span<const double> weights = {});
DarResult dar_alienation(const Mat& reps, std::span<const int> labels,
                         const PrototypeBank& bank, int layer_index,
                         std::span<const double> weights = {});
DarResult dar_combined(const Mat& reps, std::span<const int> labels,
                       const PrototypeBank& bank, int layer_index, double beta,
                       std::span<const double> weights = {});
DarResult dar(const DarConfig& cfg, const Mat& reps, std::span<const int> labels,
              const PrototypeBank& bank, int layer_index,
              std::span<const double> weights = {});

struct KMeansResult {
  PrototypeBank bank;
  int iterations = 0;
  // Total within-cluster cosine distance under the starting centers, then
  // after every center update.
  std::vector<double> objective;
};

// Re-centers the K prototypes of one layer on unlabeled representations
// (dim x N). Centers start at the current prototypes; assignment uses cosine
// distance, the update uses the arithmetic mean; empty clusters keep their
// center. Stops after max_iters or when every center moves less than tol.
KMeansResult adjust_prototypes_kmeans(const PrototypeBank& bank, int layer_index,
                                      const Mat& unlabeled_reps, int max_iters,
                                      double tol);

}  // namespace exitlab

#endif  // EXITLAB_PROTOTYPES_HPP_
