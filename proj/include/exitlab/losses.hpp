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

// Loss assembly across exits: per-layer losses and their depth-weighted
// average.

#ifndef EXITLAB_LOSSES_HPP_
#define EXITLAB_LOSSES_HPP_

#include <span>

namespace exitlab {

// ce + alpha * dar for intermediate layers, ce alone for the last layer.
double layer_loss(double ce, double dar, double alpha, bool is_last);

// Weight of 1-based layer m in the total loss: m / (1 + 2 + ... + M).
double layer_weight(int layer, int num_layers);

// sum_m m * L_m / sum_m m over the M per-layer losses.
double total_loss(std::span<const double> layer_losses);
// Same, but throws ShapeError unless exactly `num_layers` entries are given.
double total_loss(std::span<const double> layer_losses, int num_layers);

}  // namespace exitlab

#endif  // EXITLAB_LOSSES_HPP_
