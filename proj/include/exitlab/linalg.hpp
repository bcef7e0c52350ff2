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

#ifndef EXITLAB_LINALG_HPP_
#define EXITLAB_LINALG_HPP_

#include <Eigen/Dense>
#include <span>

namespace exitlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Batches are stored column-major: one sample per column.

inline std::span<const double> as_span(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline std::span<const double> col_span(const Mat& m, Eigen::Index c) {
  return {m.col(c).data(), static_cast<std::size_t>(m.rows())};
}

}  // namespace exitlab

#endif  // EXITLAB_LINALG_HPP_
