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

// Decoupled-weight-decay Adam over a ParameterSet.

#ifndef EXITLAB_OPTIMIZER_HPP_
#define EXITLAB_OPTIMIZER_HPP_

#include <cstdint>

#include "exitlab/model.hpp"

namespace exitlab {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // applied to weight matrices only, not biases
};

class AdamW {
 public:
  AdamW(const ParameterSet& like, AdamWOptions opts);

  // p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
  void step(ParameterSet& params, const ParameterSet& grads, double lr);
  std::int64_t steps_taken() const { return t_; }
  const AdamWOptions& options() const { return opts_; }

 private:
  AdamWOptions opts_;
  ParameterSet m_;
  ParameterSet v_;
  std::int64_t t_ = 0;
};

// eta_t = eta * (1 - t / total_steps) for the 0-based step index t.
double linear_decay_lr(double base_lr, std::int64_t step, std::int64_t total_steps);

}  // namespace exitlab

#endif  // EXITLAB_OPTIMIZER_HPP_
