/*
 * Copyright 2026 The HetSNGP Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Spectral-normalized residual MLP h(x) producing the shared latent
// representation. Gradients are computed by a hand-written reverse pass over
// a recorded Tape.

#ifndef HETSNGP_FEATURE_NET_HPP_
#define HETSNGP_FEATURE_NET_HPP_

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hetsngp/linalg.hpp"

namespace hetsngp {

enum class Activation { kRelu, kTanh, kIdentity };

// kSoftBound rescales a weight only when its spectral norm exceeds the bound;
// kHardProjection always rescales it to exactly the bound.
enum class SpectralMode { kSoftBound, kHardProjection };

struct FeatureExtractorConfig {
  int input_dim = 2;
  int hidden_dim = 128;
  int num_residual_blocks = 6;
  int output_dim = 128;
  double spectral_bound = 6.0;
  int sn_power_iters = 20;
  Activation activation = Activation::kRelu;
  bool spectral_normalization = true;
  SpectralMode spectral_mode = SpectralMode::kSoftBound;

  void validate() const {
    require(input_dim >= 1 && hidden_dim >= 1 && num_residual_blocks >= 1 && output_dim >= 1,
            ErrorCode::kInvalidConfig, "feature net dimensions must be >= 1");
    require(spectral_bound > 0.0, ErrorCode::kInvalidConfig, "spectral_bound must be > 0");
    require(sn_power_iters >= 1, ErrorCode::kInvalidConfig, "sn_power_iters must be >= 1");
  }
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Vector u;       // power-iteration state, length out

  // Y = X W^T + b
  Matrix apply(const Matrix& x) const {
    Matrix y = x * weight.transpose();
    y.rowwise() += bias.transpose();
    return y;
  }
};

struct Tape {
  std::uint64_t owner = 0;
  bool valid = false;
  Matrix input;
  std::vector<Matrix> block_inputs;  // z entering each residual block
  std::vector<Matrix> pre_activations;
  Matrix final_hidden;  // z entering the output layer

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&& other) noexcept { *this = std::move(other); }
  Tape& operator=(Tape&& other) noexcept {
    owner = other.owner;
    valid = other.valid;
    input = std::move(other.input);
    block_inputs = std::move(other.block_inputs);
    pre_activations = std::move(other.pre_activations);
    final_hidden = std::move(other.final_hidden);
    other.valid = false;
    return *this;
  }
};

// Gradients laid out parallel to FeatureExtractor::layers().
struct LayerGrads {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

namespace detail {

inline std::uint64_t next_net_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kTanh: return std::tanh(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

inline double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

}  // namespace detail

class FeatureExtractor {
 public:
  FeatureExtractor() = default;

  // Glorot-normal init (variance 2 / (fan_in + fan_out)) for the input and
  // output affine maps, He-normal init (variance 2 / fan_in) for the ReLU
  // residual branches, further divided by the number of blocks so the skip
  // path keeps activations O(1). Biases start at zero; power-iteration vectors
  // are random unit vectors.
  FeatureExtractor(const FeatureExtractorConfig& config, Rng& rng) : config_(config) {
    config_.validate();
    id_ = detail::next_net_id();
    auto make = [&](int in, int out, double variance) {
      DenseLayer layer;
      layer.weight = sample_gaussian(rng, out, in) * std::sqrt(variance);
      layer.bias = Vector::Zero(out);
      layer.u = sample_gaussian_vector(rng, out).normalized();
      return layer;
    };
    auto glorot = [](int in, int out) { return 2.0 / (in + out); };
    const int hidden = config_.hidden_dim;
    layers_.push_back(make(config_.input_dim, hidden, glorot(config_.input_dim, hidden)));
    for (int b = 0; b < config_.num_residual_blocks; ++b) {
      layers_.push_back(make(hidden, hidden, 2.0 / hidden / config_.num_residual_blocks));
    }
    layers_.push_back(make(hidden, config_.output_dim, glorot(hidden, config_.output_dim)));
  }

  // Restores a network from explicit layers (checkpoint loading, tests).
  FeatureExtractor(const FeatureExtractorConfig& config, std::vector<DenseLayer> layers)
      : config_(config), layers_(std::move(layers)) {
    config_.validate();
    id_ = detail::next_net_id();
    require(static_cast<int>(layers_.size()) == config_.num_residual_blocks + 2,
            ErrorCode::kDimensionMismatch, "feature net: wrong number of layers");
    check_layer(0, config_.input_dim, config_.hidden_dim);
    for (int b = 1; b <= config_.num_residual_blocks; ++b) {
      check_layer(b, config_.hidden_dim, config_.hidden_dim);
    }
    check_layer(layers_.size() - 1, config_.hidden_dim, config_.output_dim);
  }

  FeatureExtractor(const FeatureExtractor& other)
      : config_(other.config_), layers_(other.layers_), id_(detail::next_net_id()) {}
  FeatureExtractor& operator=(const FeatureExtractor& other) {
    config_ = other.config_;
    layers_ = other.layers_;
    id_ = detail::next_net_id();
    return *this;
  }
  FeatureExtractor(FeatureExtractor&&) noexcept = default;
  FeatureExtractor& operator=(FeatureExtractor&&) noexcept = default;

  const FeatureExtractorConfig& config() const { return config_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix z = layers_[0].apply(x);
    for (int b = 1; b <= config_.num_residual_blocks; ++b) {
      Matrix pre = layers_[b].apply(z);
      z += pre.unaryExpr([a = config_.activation](double v) { return detail::activate(a, v); });
    }
    return layers_.back().apply(z);
  }

  Matrix forward(const Matrix& x, Tape& tape) const {
    check_input(x);
    tape = Tape();
    tape.owner = id_;
    tape.input = x;
    Matrix z = layers_[0].apply(x);
    for (int b = 1; b <= config_.num_residual_blocks; ++b) {
      tape.block_inputs.push_back(z);
      Matrix pre = layers_[b].apply(z);
      z += pre.unaryExpr([a = config_.activation](double v) { return detail::activate(a, v); });
      tape.pre_activations.push_back(std::move(pre));
    }
    tape.final_hidden = z;
    tape.valid = true;
    return layers_.back().apply(z);
  }

  // Reverse pass. Consumes the tape; grad_x receives dL/dx when non-null.
  LayerGrads backward(Tape&& tape, const Matrix& grad_h, Matrix* grad_x = nullptr) const {
    require(tape.valid && tape.owner == id_, ErrorCode::kTapeMismatch,
            "feature net backward: tape is stale, consumed, or from another network");
    Tape t = std::move(tape);
    require_shape(grad_h, t.input.rows(), config_.output_dim, "feature net backward grad_h");
    const int nb = config_.num_residual_blocks;
    LayerGrads g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());

    const DenseLayer& out = layers_.back();
    g.weight.back() = grad_h.transpose() * t.final_hidden;
    g.bias.back() = grad_h.colwise().sum().transpose();
    Matrix dz = grad_h * out.weight;

    for (int b = nb; b >= 1; --b) {
      const Matrix& pre = t.pre_activations[b - 1];
      Matrix dpre = dz.cwiseProduct(pre.unaryExpr(
          [a = config_.activation](double v) { return detail::activate_grad(a, v); }));
      g.weight[b] = dpre.transpose() * t.block_inputs[b - 1];
      g.bias[b] = dpre.colwise().sum().transpose();
      dz += dpre * layers_[b].weight;
    }
    g.weight[0] = dz.transpose() * t.input;
    g.bias[0] = dz.colwise().sum().transpose();
    if (grad_x != nullptr) *grad_x = dz * layers_[0].weight;
    return g;
  }

  // Rescales every weight matrix whose estimated spectral norm exceeds the
  // bound (or all of them in kHardProjection mode). Warm-starts from the
  // stored power-iteration vectors.
  void apply_spectral_normalization(int iters) {
    const double c = config_.spectral_bound;
    for (DenseLayer& layer : layers_) {
      SpectralEstimate est = spectral_norm(layer.weight, iters, layer.u);
      layer.u = est.u;
      bool rescale = config_.spectral_mode == SpectralMode::kHardProjection
                         ? est.sigma > 0.0
                         : est.sigma > c;
      if (rescale) layer.weight *= c / est.sigma;
    }
  }

  void apply_spectral_normalization() { apply_spectral_normalization(config_.sn_power_iters); }

  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> out;
    for (DenseLayer& layer : layers_) {
      out.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
      out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
  }

 private:
  void check_input(const Matrix& x) const {
    if (x.cols() != config_.input_dim) {
      fail(ErrorCode::kDimensionMismatch, "feature net: input has " + std::to_string(x.cols()) +
                                              " columns, expected " +
                                              std::to_string(config_.input_dim));
    }
  }

  void check_layer(std::size_t i, int in, int out) const {
    const DenseLayer& l = layers_[i];
    require(l.weight.rows() == out && l.weight.cols() == in && l.bias.size() == out &&
                l.u.size() == out,
            ErrorCode::kDimensionMismatch, "feature net: layer " + std::to_string(i) + " shape");
  }

  FeatureExtractorConfig config_;
  std::vector<DenseLayer> layers_;
  std::uint64_t id_ = 0;
};

inline std::vector<std::span<double>> gradient_spans(LayerGrads& g) {
  std::vector<std::span<double>> out;
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    out.emplace_back(g.weight[i].data(), static_cast<std::size_t>(g.weight[i].size()));
    out.emplace_back(g.bias[i].data(), static_cast<std::size_t>(g.bias[i].size()));
  }
  return out;
}

}  // namespace hetsngp

#endif  // HETSNGP_FEATURE_NET_HPP_
