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

// Synthetic classification tasks with an easy/hard difficulty mixture, plus
// dataset file I/O.

#ifndef EXITLAB_DATA_HPP_
#define EXITLAB_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "exitlab/linalg.hpp"

namespace exitlab {

struct Sample {
  Vec x;
  int y = 0;  // 0-based class index
};

using Dataset = std::vector<Sample>;

struct DatasetSpec {
  int num_classes = 2;
  int input_dim = 16;
  int n_train = 10000;
  int n_dev = 1000;
  int n_test = 2000;
  double easy_fraction = 0.3;
  double easy_margin = 6.0;  // distance between class means, unit noise
  double hard_margin = 4.0;
  // Displacement of the hard component along a direction orthogonal to the
  // class simplex. Needs input_dim >= num_classes when positive.
  double hard_offset = 3.0;
  double label_noise = 0.0;
  std::vector<double> shift;  // empty, or input_dim entries added to test inputs
  std::uint64_t seed = 42;

  void validate() const;
};

struct Splits {
  Dataset train;
  Dataset dev;
  Dataset test;
};

// Each class mean sits on a regular simplex (equal pairwise distances) that
// is randomly rotated into input space. Easy samples use easy_margin as the
// distance between class means, hard samples hard_margin. The hard component
// shares the easy orientation but assigns class k to vertex k+1 (mod K) and
// is pushed hard_offset away along an orthogonal direction, so the easy
// decision rule is wrong on hard samples and telling the components apart
// takes a nonlinear feature. Noise is isotropic unit Gaussian.
Splits generate(const DatasetSpec& spec);

// The "easy" preset: only well-separated clusters, 2000 training samples.
DatasetSpec easy_preset();

// Unit-norm regular simplex vertices (columns), num_classes of them, in
// `dim` dimensions. Requires dim >= num_classes - 1.
Mat simplex_vertices(int num_classes, int dim);

// JSONL: one {"x": [...], "y": k} object per line.
void save_dataset(const Dataset& samples, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// CSV with a header row and columns (text, label). Text is split on
// whitespace and each token is hashed into one of `dim` buckets; the bucket
// counts are L2-normalized.
Dataset load_text_csv(const std::filesystem::path& path, int dim);
Vec hash_text(std::string_view text, int dim);

// Stack inputs as columns / gather labels.
Mat stack_inputs(std::span<const Sample> samples);
std::vector<int> labels_of(std::span<const Sample> samples);

}  // namespace exitlab

#endif  // EXITLAB_DATA_HPP_
