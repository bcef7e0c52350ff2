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

// The multi-exit network: M dense backbone blocks, each followed by a linear
// internal classifier and (for layers 1..M-1) a linear projection into the
// metric space where class prototypes live.

#ifndef EXITLAB_MODEL_HPP_
#define EXITLAB_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exitlab/linalg.hpp"
#include "exitlab/prototypes.hpp"

namespace exitlab {

enum class Activation { kTanh, kRelu };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct ModelConfig {
  int num_layers = 6;   // M
  int num_classes = 2;  // K
  int input_dim = 16;
  int hidden_dim = 32;
  int proto_dim = 16;
  Activation activation = Activation::kTanh;
  // When false the metric space is the hidden state itself (ablation
  // without prototypical networks); proto_dim is then ignored.
  bool use_projection = true;
  std::uint64_t seed = 0;

  // Dimension of the space prototypes live in.
  int metric_dim() const { return use_projection ? proto_dim : hidden_dim; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
  Mat backbone_w;  // hidden x (input_dim | hidden_dim)
  Vec backbone_b;
  Mat classifier_w;  // K x hidden
  Vec classifier_b;
  Mat proj_w;  // proto x hidden; empty at layer M or without projection
  Vec proj_b;
};

struct ParameterSet {
  std::vector<LayerParams> layers;

  // Zero-filled set with the same shapes.
  ParameterSet zeros_like() const;
  friend bool operator==(const ParameterSet& a, const ParameterSet& b);
};

// One parameter tensor, viewed as a flat array. Declared order is: for each
// layer, backbone W, b, classifier W, b, projection W, b (when present).
struct TensorView {
  std::string name;
  double* data;
  std::size_t size;
  bool is_bias;
};
struct ConstTensorView {
  std::string name;
  const double* data;
  std::size_t size;
  bool is_bias;
};
std::vector<TensorView> tensors(ParameterSet& p);
std::vector<ConstTensorView> tensors(const ParameterSet& p);
std::size_t parameter_count(const ParameterSet& p);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ParameterSet init_parameters(const ModelConfig& cfg);
// Throws ShapeError when tensor shapes disagree with cfg.
void check_shapes(const ModelConfig& cfg, const ParameterSet& p);

struct LayerOutput {
  Vec hidden;     // h
  Vec projected;  // metric-space representation; empty at layer M
  Vec probs;      // softmax of the classifier logits
};

// Numerically stable softmax over each column.
Mat softmax_columns(const Mat& logits);

class Model {
 public:
  Model() = default;
  explicit Model(ModelConfig cfg);  // freshly initialized parameters
  Model(ModelConfig cfg, ParameterSet params);

  const ModelConfig& config() const { return cfg_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& mutable_params() { return params_; }

  // Runs block `layer_index` (0-based) on the previous hidden state (or the
  // input for layer_index 0).
  LayerOutput layer(int layer_index, const Vec& prev_hidden) const;
  // All M layer outputs for one input.
  std::vector<LayerOutput> forward(const Vec& x) const;

 private:
  ModelConfig cfg_;
  ParameterSet params_;
};

// Cached activations of a batch forward pass (columns are samples).
struct BatchForward {
  std::vector<Mat> pre;     // pre-activation per layer
  std::vector<Mat> hidden;  // per layer
  std::vector<Mat> probs;   // per layer
  std::vector<Mat> proj;    // per intermediate layer (M-1 entries)
};

BatchForward forward_batch(const Model& model, const Mat& inputs);

// Per-sample cross-entropy averaged over the batch (optionally weighted).
double cross_entropy(const Mat& probs, std::span<const int> labels,
                     std::span<const double> weights = {});

struct LossConfig {
  double alpha = 0.0;  // DAR weight for intermediate layers
  DarConfig dar;
  // Per-sample multipliers on every loss term; empty means all ones.
  std::vector<double> sample_weights;
};

struct BackwardResult {
  double total_loss = 0.0;
  std::vector<double> ce;   // per layer (M)
  std::vector<double> dar;  // per intermediate layer (M-1)
  ParameterSet grads;
};

// Total loss over the batch and its exact gradient with respect to every
// parameter. The bank is read-only here: no gradient reaches the prototypes.
// When `fwd` is given it must be forward_batch(model, inputs).
BackwardResult backward(const Model& model, const Mat& inputs,
                        std::span<const int> labels, const PrototypeBank& bank,
                        const LossConfig& loss, const BatchForward* fwd = nullptr);

// Loss only (no gradient); used by finite-difference checks.
double batch_loss(const Model& model, const Mat& inputs, std::span<const int> labels,
                  const PrototypeBank& bank, const LossConfig& loss);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  PrototypeBank bank;
  std::uint64_t step = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace exitlab

#endif  // EXITLAB_MODEL_HPP_
