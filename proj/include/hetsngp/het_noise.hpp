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

// Input-dependent low-rank heteroscedastic logit noise.
//
// For each input the head produces a K x R factor V(x) and a positive K-vector
// d(x); logit noise is d(x) * eps_K + V(x) eps_R, i.e. Gaussian with
// covariance V V^T + diag(d^2). The standard variant maps the latent to V(x)
// with one affine layer. The parameter-efficient variant maps it to a K-vector
// v(x) and sets V(x) = (v(x) 1_R^T) .* V with V a free K x R matrix.

#ifndef HETSNGP_HET_NOISE_HPP_
#define HETSNGP_HET_NOISE_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hetsngp/feature_net.hpp"
#include "hetsngp/linalg.hpp"

namespace hetsngp {

enum class HetVariant { kStandard, kParameterEfficient };

struct HetHeadConfig {
  int num_classes = 2;
  int rank = 2;
  HetVariant variant = HetVariant::kStandard;
  double min_scale = 1e-3;
  double init_scale = 1.0;  // multiplies the 1/sqrt(fan_in) weight init

  void validate() const {
    require(num_classes >= 1, ErrorCode::kInvalidConfig, "het head needs >= 1 class");
    require(rank >= 1, ErrorCode::kInvalidConfig, "het rank must be >= 1");
    require(variant == HetVariant::kParameterEfficient || rank <= num_classes,
            ErrorCode::kInvalidConfig, "standard het head requires rank <= num_classes");
    require(min_scale > 0.0, ErrorCode::kInvalidConfig, "het min_scale must be > 0");
    require(init_scale >= 0.0, ErrorCode::kInvalidConfig, "het init_scale must be >= 0");
  }
};

// Batch of covariance factors. Row i of `v_factor` is V(x_i) flattened
// row-major (entry (k, r) at k * R + r).
struct HetFactors {
  int num_classes = 0;
  int rank = 0;
  Matrix v_factor;  // n x (K*R)
  Matrix diag;      // n x K, d(x)

  Matrix factor(Eigen::Index i) const {
    return Eigen::Map<const Matrix>(v_factor.row(i).data(), num_classes, rank);
  }
};

struct HetTape {
  std::uint64_t owner = 0;
  bool valid = false;
  Matrix input;
  Matrix raw_diag;  // pre-softplus
  Matrix small_v;   // parameter-efficient v(x), n x K

  HetTape() = default;
  HetTape(const HetTape&) = delete;
  HetTape& operator=(const HetTape&) = delete;
  HetTape(HetTape&& o) noexcept { *this = std::move(o); }
  HetTape& operator=(HetTape&& o) noexcept {
    owner = o.owner;
    valid = o.valid;
    input = std::move(o.input);
    raw_diag = std::move(o.raw_diag);
    small_v = std::move(o.small_v);
    o.valid = false;
    return *this;
  }
};

// Cached reparameterization noise for S samples over n points. Row
// s * n + i holds the draw for sample s of point i.
struct NoiseDraw {
  int samples = 0;
  int points = 0;
  Matrix eps_k;  // (S*n) x K
  Matrix eps_r;  // (S*n) x R
};

struct HetGrads {
  Matrix v_weight;  // standard: (K*R) x latent; parameter-efficient: K x latent
  Vector v_bias;
  Matrix free_v;  // parameter-efficient only, K x R
  Matrix d_weight;
  Vector d_bias;
};

class HetHead {
 public:
  HetHead() = default;

  HetHead(const HetHeadConfig& config, int latent_dim, Rng& rng)
      : config_(config), latent_dim_(latent_dim) {
    config_.validate();
    require(latent_dim >= 1, ErrorCode::kInvalidConfig, "het head latent_dim must be >= 1");
    id_ = detail::next_net_id();
    const int k = config_.num_classes;
    const int r = config_.rank;
    const double std = config_.init_scale / std::sqrt(static_cast<double>(latent_dim));
    const int v_rows = standard() ? k * r : k;
    v_weight_ = sample_gaussian(rng, v_rows, latent_dim) * std;
    v_bias_ = Vector::Zero(v_rows);
    if (!standard()) free_v_ = sample_gaussian(rng, k, r) * config_.init_scale;
    d_weight_ = sample_gaussian(rng, k, latent_dim) * std;
    d_bias_ = Vector::Zero(k);
  }

  HetHead(const HetHeadConfig& config, int latent_dim, Matrix v_weight, Vector v_bias,
          Matrix free_v, Matrix d_weight, Vector d_bias)
      : config_(config),
        latent_dim_(latent_dim),
        v_weight_(std::move(v_weight)),
        v_bias_(std::move(v_bias)),
        free_v_(std::move(free_v)),
        d_weight_(std::move(d_weight)),
        d_bias_(std::move(d_bias)) {
    config_.validate();
    id_ = detail::next_net_id();
    const int k = config_.num_classes;
    const int v_rows = standard() ? k * config_.rank : k;
    require_shape(v_weight_, v_rows, latent_dim, "het head v_weight");
    require(v_bias_.size() == v_rows, ErrorCode::kDimensionMismatch, "het head v_bias");
    if (!standard()) require_shape(free_v_, k, config_.rank, "het head free V");
    require_shape(d_weight_, k, latent_dim, "het head d_weight");
    require(d_bias_.size() == k, ErrorCode::kDimensionMismatch, "het head d_bias");
  }

  HetHead(const HetHead& o)
      : config_(o.config_),
        latent_dim_(o.latent_dim_),
        v_weight_(o.v_weight_),
        v_bias_(o.v_bias_),
        free_v_(o.free_v_),
        d_weight_(o.d_weight_),
        d_bias_(o.d_bias_),
        id_(detail::next_net_id()) {}
  HetHead& operator=(const HetHead& o) {
    HetHead copy(o);
    *this = std::move(copy);
    return *this;
  }
  HetHead(HetHead&&) noexcept = default;
  HetHead& operator=(HetHead&&) noexcept = default;

  const HetHeadConfig& config() const { return config_; }
  int latent_dim() const { return latent_dim_; }
  bool standard() const { return config_.variant == HetVariant::kStandard; }

  const Matrix& v_weight() const { return v_weight_; }
  Matrix& v_weight() { return v_weight_; }
  const Vector& v_bias() const { return v_bias_; }
  Vector& v_bias() { return v_bias_; }
  const Matrix& free_v() const { return free_v_; }
  Matrix& free_v() { return free_v_; }
  const Matrix& d_weight() const { return d_weight_; }
  Matrix& d_weight() { return d_weight_; }
  const Vector& d_bias() const { return d_bias_; }
  Vector& d_bias() { return d_bias_; }

  // Drives the head's output to (numerically) zero noise: V(x) = 0 and
  // d(x) = min_scale up to softplus(-60).
  void silence() {
    v_weight_.setZero();
    v_bias_.setZero();
    d_weight_.setZero();
    d_bias_.setConstant(-60.0);
  }

  HetFactors covariance_factors(const Matrix& h) const {
    HetTape unused;
    return covariance_factors(h, unused);
  }

  HetFactors covariance_factors(const Matrix& h, HetTape& tape) const {
    if (h.cols() != latent_dim_) {
      fail(ErrorCode::kDimensionMismatch, "het head: latent has " + std::to_string(h.cols()) +
                                              " columns, expected " +
                                              std::to_string(latent_dim_));
    }
    const int k = config_.num_classes;
    const int r = config_.rank;
    tape = HetTape();
    tape.owner = id_;
    tape.input = h;
    tape.raw_diag = h * d_weight_.transpose();
    tape.raw_diag.rowwise() += d_bias_.transpose();

    HetFactors out;
    out.num_classes = k;
    out.rank = r;
    out.diag = tape.raw_diag.unaryExpr(
        [ms = config_.min_scale](double x) { return softplus(x) + ms; });
    Matrix affine = h * v_weight_.transpose();
    affine.rowwise() += v_bias_.transpose();
    if (standard()) {
      out.v_factor = std::move(affine);
    } else {
      out.v_factor.resize(h.rows(), k * r);
      for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (int c = 0; c < k; ++c) {
          for (int j = 0; j < r; ++j) out.v_factor(i, c * r + j) = affine(i, c) * free_v_(c, j);
        }
      }
      tape.small_v = std::move(affine);
    }
    tape.valid = true;
    return out;
  }

  // Gradients of the loss with respect to the head parameters (and the
  // latent, if grad_h is non-null) given dL/dV(x_i) and dL/dd(x_i).
  HetGrads backward(HetTape&& tape, const Matrix& grad_v_factor, const Matrix& grad_diag,
                    Matrix* grad_h = nullptr) const {
    require(tape.valid && tape.owner == id_, ErrorCode::kTapeMismatch,
            "het head backward: tape is stale, consumed, or from another head");
    HetTape t = std::move(tape);
    const Eigen::Index n = t.input.rows();
    const int k = config_.num_classes;
    const int r = config_.rank;
    require_shape(grad_v_factor, n, k * r, "het head backward grad V");
    require_shape(grad_diag, n, k, "het head backward grad d");

    HetGrads g;
    Matrix grad_raw = grad_diag.cwiseProduct(t.raw_diag.unaryExpr(&sigmoid));
    g.d_weight = grad_raw.transpose() * t.input;
    g.d_bias = grad_raw.colwise().sum().transpose();

    Matrix grad_affine;
    if (standard()) {
      grad_affine = grad_v_factor;
    } else {
      grad_affine = Matrix::Zero(n, k);
      g.free_v = Matrix::Zero(k, r);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) {
          for (int j = 0; j < r; ++j) {
            double gv = grad_v_factor(i, c * r + j);
            grad_affine(i, c) += gv * free_v_(c, j);
            g.free_v(c, j) += gv * t.small_v(i, c);
          }
        }
      }
    }
    g.v_weight = grad_affine.transpose() * t.input;
    g.v_bias = grad_affine.colwise().sum().transpose();
    if (grad_h != nullptr) *grad_h = grad_affine * v_weight_ + grad_raw * d_weight_;
    return g;
  }

  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> out;
    auto add = [&out](auto& m) {
      if (m.size() > 0) out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
    };
    add(v_weight_);
    add(v_bias_);
    add(free_v_);
    add(d_weight_);
    add(d_bias_);
    return out;
  }

  // Parameters producing V(x): K*R*(latent+1) for the standard variant,
  // K*(latent+1) + K*R for the parameter-efficient one.
  std::size_t v_parameter_count() const {
    return v_weight_.size() + v_bias_.size() + free_v_.size();
  }
  // Parameters producing d(x): K*(latent+1).
  std::size_t d_parameter_count() const { return d_weight_.size() + d_bias_.size(); }
  std::size_t parameter_count() const { return v_parameter_count() + d_parameter_count(); }

 private:
  HetHeadConfig config_;
  int latent_dim_ = 0;
  Matrix v_weight_;
  Vector v_bias_;
  Matrix free_v_;
  Matrix d_weight_;
  Vector d_bias_;
  std::uint64_t id_ = 0;
};

inline std::vector<std::span<double>> gradient_spans(HetGrads& g) {
  std::vector<std::span<double>> out;
  auto add = [&out](auto& m) {
    if (m.size() > 0) out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
  };
  add(g.v_weight);
  add(g.v_bias);
  add(g.free_v);
  add(g.d_weight);
  add(g.d_bias);
  return out;
}

// VV^T + diag(d^2).
inline Matrix full_covariance(const Matrix& v, const Vector& d) {
  require(v.rows() == d.size(), ErrorCode::kDimensionMismatch,
          "full_covariance: V rows must equal length of d");
  Matrix out = v * v.transpose();
  out.diagonal() += d.cwiseAbs2();
  return out;
}

// d .* eps_K + V eps_R. eps_K is drawn before eps_R.
inline Vector sample_noise(const Matrix& v, const Vector& d, Rng& rng) {
  require(v.rows() == d.size(), ErrorCode::kDimensionMismatch,
          "sample_noise: V rows must equal length of d");
  Vector eps_k = sample_gaussian_vector(rng, d.size());
  Vector eps_r = sample_gaussian_vector(rng, v.cols());
  return d.cwiseProduct(eps_k) + v * eps_r;
}

// Draws reparameterization noise for S samples of n points. Point i uses the
// child stream rng.split(i) so a point's draws do not depend on batch
// composition; within a point, samples are drawn in order with eps_K first.
inline NoiseDraw draw_noise(const Rng& rng, int samples, int points, int num_classes, int rank) {
  NoiseDraw draw;
  draw.samples = samples;
  draw.points = points;
  draw.eps_k.resize(static_cast<Eigen::Index>(samples) * points, num_classes);
  draw.eps_r.resize(static_cast<Eigen::Index>(samples) * points, rank);
  for (int i = 0; i < points; ++i) {
    Rng point_rng = rng.split(static_cast<std::uint64_t>(i));
    for (int s = 0; s < samples; ++s) {
      const Eigen::Index row = static_cast<Eigen::Index>(s) * points + i;
      for (int c = 0; c < num_classes; ++c) draw.eps_k(row, c) = point_rng.normal();
      for (int j = 0; j < rank; ++j) draw.eps_r(row, j) = point_rng.normal();
    }
  }
  return draw;
}

// Noise for sample s of every point, n x K.
inline Matrix noise_for_sample(const HetFactors& f, const NoiseDraw& draw, int s) {
  const Eigen::Index n = f.diag.rows();
  require(draw.points == n && s >= 0 && s < draw.samples, ErrorCode::kDimensionMismatch,
          "noise_for_sample: draw does not match factors");
  Matrix out(n, f.num_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index row = static_cast<Eigen::Index>(s) * n + i;
    out.row(i) = f.diag.row(i).cwiseProduct(draw.eps_k.row(row)) +
                 (f.factor(i) * draw.eps_r.row(row).transpose()).transpose();
  }
  return out;
}

// Pathwise gradient: maps dL/du for every sample (rows s * n + i) to dL/dV and
// dL/dd with the cached eps held fixed.
inline void noise_backward(const HetFactors& f, const NoiseDraw& draw, const Matrix& grad_u,
                           Matrix& grad_v_factor, Matrix& grad_diag) {
  const Eigen::Index n = f.diag.rows();
  const int k = f.num_classes;
  const int r = f.rank;
  require_shape(grad_u, static_cast<Eigen::Index>(draw.samples) * n, k, "noise_backward grad_u");
  grad_v_factor = Matrix::Zero(n, static_cast<Eigen::Index>(k) * r);
  grad_diag = Matrix::Zero(n, k);
  for (int s = 0; s < draw.samples; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(s) * n + i;
      for (int c = 0; c < k; ++c) {
        const double g = grad_u(row, c);
        grad_diag(i, c) += g * draw.eps_k(row, c);
        for (int j = 0; j < r; ++j) grad_v_factor(i, c * r + j) += g * draw.eps_r(row, j);
      }
    }
  }
}

// backward_noise: pathwise parameter gradients of the head given dL/du for
// each cached noise sample.
inline HetGrads backward_noise(const HetHead& head, HetTape&& tape, const HetFactors& factors,
                               const NoiseDraw& draw, const Matrix& grad_u,
                               Matrix* grad_h = nullptr) {
  Matrix gv, gd;
  noise_backward(factors, draw, grad_u, gv, gd);
  return head.backward(std::move(tape), gv, gd, grad_h);
}

}  // namespace hetsngp

#endif  // HETSNGP_HET_NOISE_HPP_
