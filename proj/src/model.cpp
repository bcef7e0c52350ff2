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

#include "exitlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "exitlab/error.hpp"
#include "exitlab/losses.hpp"

namespace exitlab {

std::string_view to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ValidationError("unknown activation '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (num_layers < 2) throw ValidationError("model: num_layers must be >= 2");
  if (num_classes < 2) throw ValidationError("model: num_classes must be >= 2");
  if (input_dim < 1 || hidden_dim < 1 || proto_dim < 1) {
    throw ValidationError("model: all dimensions must be >= 1");
  }
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet z = *this;
  for (auto& t : tensors(z)) std::fill(t.data, t.data + t.size, 0.0);
  return z;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  const auto ta = tensors(a);
  const auto tb = tensors(b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].size != tb[i].size) return false;
    for (std::size_t j = 0; j < ta[i].size; ++j) {
      if (ta[i].data[j] != tb[i].data[j]) return false;
    }
  }
  return true;
}

namespace {

template <class View, class P>
std::vector<View> collect(P& p) {
  std::vector<View> out;
  for (std::size_t m = 0; m < p.layers.size(); ++m) {
    auto& l = p.layers[m];
    const std::string pre = "layer" + std::to_string(m + 1) + ".";
    auto add = [&](const std::string& name, auto& t, bool bias) {
      if (t.size() == 0) return;
      out.push_back(View{pre + name, t.data(), static_cast<std::size_t>(t.size()), bias});
    };
    add("backbone.w", l.backbone_w, false);
    add("backbone.b", l.backbone_b, true);
    add("classifier.w", l.classifier_w, false);
    add("classifier.b", l.classifier_b, true);
    add("proj.w", l.proj_w, false);
    add("proj.b", l.proj_b, true);
  }
  return out;
}

void require_finite(const Mat& m, const char* what, int layer_index) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite ") + what + " at layer " +
                       std::to_string(layer_index + 1));
  }
}

Mat activate(Activation act, const Mat& a) {
  if (act == Activation::kTanh) return a.array().tanh().matrix();
  return a.cwiseMax(0.0);
}

// d act / d pre, expressed through the cached pre-activation and output.
Mat activation_grad(Activation act, const Mat& pre, const Mat& out) {
  if (act == Activation::kTanh) return (1.0 - out.array().square()).matrix();
  return (pre.array() > 0.0).cast<double>().matrix();
}

}  // namespace

std::vector<TensorView> tensors(ParameterSet& p) { return collect<TensorView>(p); }
std::vector<ConstTensorView> tensors(const ParameterSet& p) {
  return collect<ConstTensorView>(p);
}

std::size_t parameter_count(const ParameterSet& p) {
  std::size_t n = 0;
  for (const auto& t : tensors(p)) n += t.size;
  return n;
}

ParameterSet init_parameters(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat w(rows, cols);
    // Fill row-major so the stream order does not depend on storage order.
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = dist(rng);
    }
    return w;
  };
  ParameterSet p;
  for (int m = 0; m < cfg.num_layers; ++m) {
    LayerParams l;
    const int fan_in = m == 0 ? cfg.input_dim : cfg.hidden_dim;
    l.backbone_w = uniform(cfg.hidden_dim, fan_in);
    l.backbone_b = Vec::Zero(cfg.hidden_dim);
    l.classifier_w = uniform(cfg.num_classes, cfg.hidden_dim);
    l.classifier_b = Vec::Zero(cfg.num_classes);
    if (cfg.use_projection && m + 1 < cfg.num_layers) {
      l.proj_w = uniform(cfg.proto_dim, cfg.hidden_dim);
      l.proj_b = Vec::Zero(cfg.proto_dim);
    }
    p.layers.push_back(std::move(l));
  }
  return p;
}

void check_shapes(const ModelConfig& cfg, const ParameterSet& p) {
  cfg.validate();
  auto fail = [](int m, const char* what) {
    throw ShapeError("parameter shape mismatch at layer " + std::to_string(m + 1) +
                     ": " + what);
  };
  if (static_cast<int>(p.layers.size()) != cfg.num_layers) {
    throw ShapeError("parameter set has " + std::to_string(p.layers.size()) +
                     " layers, config expects " + std::to_string(cfg.num_layers));
  }
  for (int m = 0; m < cfg.num_layers; ++m) {
    const auto& l = p.layers[static_cast<std::size_t>(m)];
    const int fan_in = m == 0 ? cfg.input_dim : cfg.hidden_dim;
    if (l.backbone_w.rows() != cfg.hidden_dim || l.backbone_w.cols() != fan_in ||
        l.backbone_b.size() != cfg.hidden_dim) {
      fail(m, "backbone");
    }
    if (l.classifier_w.rows() != cfg.num_classes ||
        l.classifier_w.cols() != cfg.hidden_dim ||
        l.classifier_b.size() != cfg.num_classes) {
      fail(m, "classifier");
    }
    const bool want_proj = cfg.use_projection && m + 1 < cfg.num_layers;
    if (want_proj) {
      if (l.proj_w.rows() != cfg.proto_dim || l.proj_w.cols() != cfg.hidden_dim ||
          l.proj_b.size() != cfg.proto_dim) {
        fail(m, "projection");
      }
    } else if (l.proj_w.size() != 0 || l.proj_b.size() != 0) {
      fail(m, "unexpected projection");
    }
  }
}

Mat softmax_columns(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    const Eigen::ArrayXd e = (logits.col(c).array() - mx).exp();
    out.col(c) = (e / e.sum()).matrix();
  }
  return out;
}

Model::Model(ModelConfig cfg) : cfg_(cfg), params_(init_parameters(cfg)) {}

Model::Model(ModelConfig cfg, ParameterSet params)
    : cfg_(cfg), params_(std::move(params)) {
  check_shapes(cfg_, params_);
}

LayerOutput Model::layer(int layer_index, const Vec& prev_hidden) const {
  if (layer_index < 0 || layer_index >= cfg_.num_layers) {
    throw ValidationError("layer index out of range");
  }
  const auto& l = params_.layers[static_cast<std::size_t>(layer_index)];
  if (prev_hidden.size() != l.backbone_w.cols()) {
    throw ShapeError("layer " + std::to_string(layer_index + 1) + ": expected input of size " +
                     std::to_string(l.backbone_w.cols()) + ", got " +
                     std::to_string(prev_hidden.size()));
  }
  LayerOutput out;
  const Mat pre = l.backbone_w * prev_hidden + l.backbone_b;
  out.hidden = activate(cfg_.activation, pre);
  const Mat logits = l.classifier_w * out.hidden + l.classifier_b;
  require_finite(logits, "logits", layer_index);
  out.probs = softmax_columns(logits);
  if (layer_index + 1 < cfg_.num_layers) {
    out.projected = cfg_.use_projection ? Vec(l.proj_w * out.hidden + l.proj_b) : out.hidden;
    require_finite(out.projected, "projection", layer_index);
  }
  return out;
}

std::vector<LayerOutput> Model::forward(const Vec& x) const {
  if (x.size() != cfg_.input_dim) {
    throw ShapeError("forward: input has dimension " + std::to_string(x.size()) +
                     ", model expects " + std::to_string(cfg_.input_dim));
  }
  std::vector<LayerOutput> outs;
  outs.reserve(static_cast<std::size_t>(cfg_.num_layers));
  for (int m = 0; m < cfg_.num_layers; ++m) {
    outs.push_back(layer(m, m == 0 ? x : outs.back().hidden));
  }
  return outs;
}

namespace {

struct FullForward {
  BatchForward fwd;
  std::vector<Mat> logits;
};

FullForward run_batch(const Model& model, const Mat& inputs) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  if (inputs.rows() != cfg.input_dim) {
    throw ShapeError("forward_batch: input dimension mismatch");
  }
  FullForward f;
  const Mat* prev = &inputs;
  for (int m = 0; m < cfg.num_layers; ++m) {
    const auto& l = p.layers[static_cast<std::size_t>(m)];
    Mat pre = l.backbone_w * *prev;
    pre.colwise() += l.backbone_b;
    f.fwd.pre.push_back(std::move(pre));
    f.fwd.hidden.push_back(activate(cfg.activation, f.fwd.pre.back()));
    const Mat& h = f.fwd.hidden.back();
    Mat z = l.classifier_w * h;
    z.colwise() += l.classifier_b;
    require_finite(z, "logits", m);
    f.fwd.probs.push_back(softmax_columns(z));
    f.logits.push_back(std::move(z));
    if (m + 1 < cfg.num_layers) {
      if (cfg.use_projection) {
        Mat q = l.proj_w * h;
        q.colwise() += l.proj_b;
        require_finite(q, "projection", m);
        f.fwd.proj.push_back(std::move(q));
      } else {
        f.fwd.proj.push_back(h);
      }
    }
    prev = &f.fwd.hidden.back();
  }
  return f;
}

double weight_at(std::span<const double> w, Eigen::Index n) {
  return w.empty() ? 1.0 : w[static_cast<std::size_t>(n)];
}

// Weighted mean of logsumexp(z) - z_y.
double ce_from_logits(const Mat& z, std::span<const int> labels,
                      std::span<const double> w) {
  double acc = 0.0;
  for (Eigen::Index n = 0; n < z.cols(); ++n) {
    const double mx = z.col(n).maxCoeff();
    const double lse = mx + std::log((z.col(n).array() - mx).exp().sum());
    acc += weight_at(w, n) * (lse - z(labels[static_cast<std::size_t>(n)], n));
  }
  return acc / static_cast<double>(z.cols());
}

void check_labels(const Model& model, const Mat& inputs, std::span<const int> labels,
                  const LossConfig& loss) {
  if (inputs.cols() == 0) throw ValidationError("backward: empty batch");
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
    throw ShapeError("backward: inputs and labels differ in length");
  }
  if (!loss.sample_weights.empty() && loss.sample_weights.size() != labels.size()) {
    throw ShapeError("backward: sample weights and labels differ in length");
  }
  if (!(loss.alpha >= 0.0)) throw ValidationError("backward: alpha must be >= 0");
  for (int y : labels) {
    if (y < 0 || y >= model.config().num_classes) {
      throw ValidationError("backward: label out of range");
    }
  }
}

}  // namespace

BatchForward forward_batch(const Model& model, const Mat& inputs) {
  return run_batch(model, inputs).fwd;
}

double cross_entropy(const Mat& probs, std::span<const int> labels,
                     std::span<const double> weights) {
  if (static_cast<std::size_t>(probs.cols()) != labels.size() || labels.empty()) {
    throw ShapeError("cross_entropy: probs and labels differ in length");
  }
  double acc = 0.0;
  for (Eigen::Index n = 0; n < probs.cols(); ++n) {
    const double p = probs(labels[static_cast<std::size_t>(n)], n);
    acc -= weight_at(weights, n) * std::log(std::max(p, 1e-300));
  }
  return acc / static_cast<double>(probs.cols());
}

BackwardResult backward(const Model& model, const Mat& inputs,
                        std::span<const int> labels, const PrototypeBank& bank,
                        const LossConfig& loss, const BatchForward* fwd) {
  check_labels(model, inputs, labels, loss);
  const auto& cfg = model.config();
  const auto& p = model.params();
  const int num_layers = cfg.num_layers;
  const std::span<const double> w(loss.sample_weights);

  FullForward owned;
  std::vector<Mat> logits;
  if (fwd == nullptr) {
    owned = run_batch(model, inputs);
    fwd = &owned.fwd;
    logits = std::move(owned.logits);
  } else {
    // Rebuild logits from cached hidden states for a numerically stable CE.
    for (int m = 0; m < num_layers; ++m) {
      const auto& l = p.layers[static_cast<std::size_t>(m)];
      Mat z = l.classifier_w * fwd->hidden[static_cast<std::size_t>(m)];
      z.colwise() += l.classifier_b;
      logits.push_back(std::move(z));
    }
  }

  BackwardResult r;
  r.grads = p.zeros_like();
  const double inv_n = 1.0 / static_cast<double>(inputs.cols());
  std::vector<double> per_layer(static_cast<std::size_t>(num_layers));
  Mat dh;  // gradient flowing into the hidden state of the current layer
  for (int m = num_layers - 1; m >= 0; --m) {
    const auto mi = static_cast<std::size_t>(m);
    const auto& l = p.layers[mi];
    auto& g = r.grads.layers[mi];
    const Mat& h = fwd->hidden[mi];
    const bool last = m + 1 == num_layers;
    const double c = layer_weight(m + 1, num_layers);

    const double ce = ce_from_logits(logits[mi], labels, w);
    double dar_loss = 0.0;
    if (dh.size() == 0) dh = Mat::Zero(h.rows(), h.cols());

    // Cross-entropy: dL/dz = c * w_n / N * (p - onehot).
    Mat dz = fwd->probs[mi];
    for (Eigen::Index n = 0; n < dz.cols(); ++n) {
      dz(labels[static_cast<std::size_t>(n)], n) -= 1.0;
      dz.col(n) *= c * weight_at(w, n) * inv_n;
    }
    g.classifier_w = dz * h.transpose();
    g.classifier_b = dz.rowwise().sum();
    dh.noalias() += l.classifier_w.transpose() * dz;

    if (!last && loss.alpha > 0.0) {
      const DarResult d = dar(loss.dar, fwd->proj[mi], labels, bank, m, w);
      dar_loss = d.loss;
      const Mat dq = (c * loss.alpha) * d.grads;
      if (cfg.use_projection) {
        g.proj_w = dq * h.transpose();
        g.proj_b = dq.rowwise().sum();
        dh.noalias() += l.proj_w.transpose() * dq;
      } else {
        dh += dq;
      }
    }
    if (!last) r.dar.push_back(dar_loss);
    r.ce.push_back(ce);
    per_layer[mi] = layer_loss(ce, dar_loss, loss.alpha, last);

    const Mat da = dh.cwiseProduct(activation_grad(cfg.activation, fwd->pre[mi], h));
    const Mat& prev = m == 0 ? inputs : fwd->hidden[mi - 1];
    g.backbone_w = da * prev.transpose();
    g.backbone_b = da.rowwise().sum();
    if (m > 0) dh = l.backbone_w.transpose() * da;
  }
  std::reverse(r.ce.begin(), r.ce.end());
  std::reverse(r.dar.begin(), r.dar.end());
  r.total_loss = total_loss(per_layer, num_layers);
  if (!std::isfinite(r.total_loss)) throw NumericError("backward: non-finite loss");
  return r;
}

double batch_loss(const Model& model, const Mat& inputs, std::span<const int> labels,
                  const PrototypeBank& bank, const LossConfig& loss) {
  check_labels(model, inputs, labels, loss);
  const auto f = run_batch(model, inputs);
  const int num_layers = model.config().num_layers;
  const std::span<const double> w(loss.sample_weights);
  std::vector<double> per_layer;
  for (int m = 0; m < num_layers; ++m) {
    const auto mi = static_cast<std::size_t>(m);
    const bool last = m + 1 == num_layers;
    const double ce = ce_from_logits(f.logits[mi], labels, w);
    double d = 0.0;
    if (!last && loss.alpha > 0.0) d = dar(loss.dar, f.fwd.proj[mi], labels, bank, m, w).loss;
    per_layer.push_back(layer_loss(ce, d, loss.alpha, last));
  }
  return total_loss(per_layer, num_layers);
}

}  // namespace exitlab
