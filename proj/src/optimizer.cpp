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

#include "exitlab/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "exitlab/error.hpp"

namespace exitlab {

AdamW::AdamW(const ParameterSet& like, AdamWOptions opts)
    : opts_(opts), m_(like.zeros_like()), v_(like.zeros_like()) {
  if (!(opts.beta1 >= 0.0 && opts.beta1 < 1.0 && opts.beta2 >= 0.0 && opts.beta2 < 1.0)) {
    throw ValidationError("AdamW: betas must lie in [0, 1)");
  }
  if (!(opts.eps > 0.0) || !(opts.weight_decay >= 0.0)) {
    throw ValidationError("AdamW: eps must be > 0 and weight_decay >= 0");
  }
}

void AdamW::step(ParameterSet& params, const ParameterSet& grads, double lr) {
  auto p = tensors(params);
  const auto g = tensors(grads);
  auto m = tensors(m_);
  auto v = tensors(v_);
  if (p.size() != g.size() || p.size() != m.size()) {
    throw ShapeError("AdamW: parameter and gradient sets differ in structure");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size != g[i].size) throw ShapeError("AdamW: tensor size mismatch");
    const double decay = p[i].is_bias ? 1.0 : 1.0 - lr * opts_.weight_decay;
    for (std::size_t j = 0; j < p[i].size; ++j) {
      const double gj = g[i].data[j];
      double& mj = m[i].data[j];
      double& vj = v[i].data[j];
      mj = opts_.beta1 * mj + (1.0 - opts_.beta1) * gj;
      vj = opts_.beta2 * vj + (1.0 - opts_.beta2) * gj * gj;
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + opts_.eps);
      p[i].data[j] = p[i].data[j] * decay - lr * update;
    }
  }
}

double linear_decay_lr(double base_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps < 1) throw ValidationError("linear_decay_lr: total_steps must be >= 1");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * std::max(0.0, 1.0 - frac);
}

}  // namespace exitlab
