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

#include "exitlab/losses.hpp"

#include "exitlab/error.hpp"

namespace exitlab {

double layer_loss(double ce, double dar, double alpha, bool is_last) {
  return is_last ? ce : ce + alpha * dar;
}

double layer_weight(int layer, int num_layers) {
  if (num_layers < 1 || layer < 1 || layer > num_layers) {
    throw ValidationError("layer_weight: layer out of range");
  }
  const double denom = 0.5 * static_cast<double>(num_layers) * (num_layers + 1);
  return static_cast<double>(layer) / denom;
}

double total_loss(std::span<const double> layer_losses) {
  if (layer_losses.empty()) throw ValidationError("total_loss: no layers");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < layer_losses.size(); ++i) {
    const double m = static_cast<double>(i + 1);
    num += m * layer_losses[i];
    den += m;
  }
  return num / den;
}

double total_loss(std::span<const double> layer_losses, int num_layers) {
  if (num_layers < 1 || layer_losses.size() != static_cast<std::size_t>(num_layers)) {
    throw ShapeError("total_loss: expected one loss per layer");
  }
  return total_loss(layer_losses);
}

}  // namespace exitlab
