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

// Random-Fourier-feature Gaussian-process output layer.
//
//   phi(h) = sqrt(2/m) * cos(W h / lengthscale + b),  W ~ N(0,1), b ~ U(0, 2pi)
//
// approximates the RBF kernel exp(-|h - h'|^2 / (2 lengthscale^2)). Logits are
// phi(h) * beta with a standard normal prior on each class column of beta. The
// Laplace posterior keeps one m x m precision per class,
//
//   P_c = I + sum_i p_ic (1 - p_ic) phi_i phi_i^T,
//
// and stores a lower-triangular factor L_c with L_c L_c^T = P_c^{-1}.

#ifndef HETSNGP_RFF_GP_HPP_
#define HETSNGP_RFF_GP_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hetsngp/linalg.hpp"

namespace hetsngp {

enum class PosteriorMode { kExactSum, kMomentum };

struct RffConfig {
  int num_features = 1024;
  double lengthscale = 1.0;
  bool median_heuristic = false;  // estimate lengthscale from first-batch latents
  bool layer_norm = true;         // normalize h before projection
  PosteriorMode posterior_mode = PosteriorMode::kExactSum;
  double momentum = 0.999;

  void validate() const {
    require(num_features >= 1, ErrorCode::kInvalidConfig, "rff num_features must be >= 1");
    require(lengthscale > 0.0, ErrorCode::kInvalidConfig, "rff lengthscale must be > 0");
    require(momentum >= 0.0 && momentum < 1.0, ErrorCode::kInvalidConfig,
            "rff momentum must be in [0, 1)");
  }
};

inline constexpr double kLayerNormEps = 1e-6;

// Per-row standardization (zero mean, unit variance), no learned affine.
inline Matrix layer_normalize(const Matrix& h) {
  Matrix out(h.rows(), h.cols());
  const double d = static_cast<double>(h.cols());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    double mean = h.row(i).sum() / d;
    RowVector centered = h.row(i).array() - mean;
    double var = centered.squaredNorm() / d;
    out.row(i) = centered / std::sqrt(var + kLayerNormEps);
  }
  return out;
}

// Gradient of layer_normalize at h given the upstream gradient.
inline Matrix layer_normalize_backward(const Matrix& h, const Matrix& grad_out) {
  require_shape(grad_out, h.rows(), h.cols(), "layer_normalize_backward");
  Matrix grad(h.rows(), h.cols());
  const double d = static_cast<double>(h.cols());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    double mean = h.row(i).sum() / d;
    RowVector centered = h.row(i).array() - mean;
    double inv_std = 1.0 / std::sqrt(centered.squaredNorm() / d + kLayerNormEps);
    RowVector xhat = centered * inv_std;
    RowVector g = grad_out.row(i);
    double g_mean = g.sum() / d;
    double gx_mean = g.dot(xhat) / d;
    grad.row(i) = inv_std * (g.array() - g_mean - xhat.array() * gx_mean);
  }
  return grad;
}

// Median of pairwise Euclidean distances between rows (median heuristic).
inline double median_pairwise_distance(const Matrix& h) {
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < h.rows(); ++j) {
      dists.push_back((h.row(i) - h.row(j)).norm());
    }
  }
  require(!dists.empty(), ErrorCode::kEmptyInput, "median heuristic needs >= 2 rows");
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

class RffProjection {
 public:
  RffProjection() = default;

  RffProjection(int num_features, int latent_dim, double lengthscale, Rng& rng)
      : weight_(sample_gaussian(rng, num_features, latent_dim)),
        bias_(sample_uniform(rng, num_features, 1, 0.0, 2.0 * std::numbers::pi).col(0)),
        lengthscale_(lengthscale) {
    require(lengthscale > 0.0, ErrorCode::kInvalidConfig, "lengthscale must be > 0");
  }

  RffProjection(Matrix weight, Vector bias, double lengthscale)
      : weight_(std::move(weight)), bias_(std::move(bias)), lengthscale_(lengthscale) {
    require(weight_.rows() == bias_.size() && weight_.rows() >= 1, ErrorCode::kDimensionMismatch,
            "rff projection: weight rows must match bias length");
    require(lengthscale > 0.0, ErrorCode::kInvalidConfig, "lengthscale must be > 0");
  }

  int num_features() const { return static_cast<int>(weight_.rows()); }
  int latent_dim() const { return static_cast<int>(weight_.cols()); }
  double lengthscale() const { return lengthscale_; }
  void set_lengthscale(double l) {
    require(l > 0.0 && std::isfinite(l), ErrorCode::kInvalidConfig, "lengthscale must be > 0");
    lengthscale_ = l;
  }
  const Matrix& weight() const { return weight_; }
  const Vector& bias() const { return bias_; }

  // Pre-cosine arguments W h / lengthscale + b, n x m.
  Matrix arguments(const Matrix& h) const {
    if (h.cols() != weight_.cols()) {
      fail(ErrorCode::kDimensionMismatch, "featurize: latent has " + std::to_string(h.cols()) +
                                              " columns, projection expects " +
                                              std::to_string(weight_.cols()));
    }
    Matrix args = (h * weight_.transpose()) / lengthscale_;
    args.rowwise() += bias_.transpose();
    return args;
  }

  Matrix featurize(const Matrix& h) const {
    const double scale = std::sqrt(2.0 / num_features());
    Matrix phi = fast_cos(arguments(h));
    phi *= scale;
    return phi;
  }

  // Forward pass that also keeps what backward() needs.
  struct Cache {
    Matrix phi;      // n x m features
    Matrix sin_arg;  // sin of the pre-cosine arguments
  };

  Cache forward(const Matrix& h) const {
    Cache cache;
    cos_sin(arguments(h), cache.phi, cache.sin_arg);
    cache.phi *= std::sqrt(2.0 / num_features());
    return cache;
  }

  // dL/dh given dL/dphi.
  Matrix backward(const Cache& cache, const Matrix& grad_phi) const {
    require_shape(grad_phi, cache.sin_arg.rows(), cache.sin_arg.cols(), "rff backward");
    const double scale = std::sqrt(2.0 / num_features());
    Matrix g = grad_phi.cwiseProduct(cache.sin_arg);
    return (g * weight_) * (-scale / lengthscale_);
  }

 private:
  Matrix weight_;
  Vector bias_;
  double lengthscale_ = 1.0;
};

class GpPosterior {
 public:
  GpPosterior() = default;

  GpPosterior(int num_features, int num_classes, PosteriorMode mode = PosteriorMode::kExactSum,
              double momentum = 0.999)
      : beta_hat_(Matrix::Zero(num_features, num_classes)), mode_(mode), momentum_(momentum) {
    require(num_features >= 1 && num_classes >= 1, ErrorCode::kInvalidConfig,
            "gp posterior dimensions must be >= 1");
    reset_precision();
  }

  int num_features() const { return static_cast<int>(beta_hat_.rows()); }
  int num_classes() const { return static_cast<int>(beta_hat_.cols()); }
  PosteriorMode mode() const { return mode_; }
  double momentum() const { return momentum_; }
  bool finalized() const { return finalized_; }
  bool accumulated() const { return accumulated_; }

  const Matrix& beta_hat() const { return beta_hat_; }
  Matrix& beta_hat() { return beta_hat_; }
  const std::vector<Matrix>& precisions() const { return precisions_; }
  const std::vector<Matrix>& cov_factors() const {
    require(finalized_, ErrorCode::kNotFinalized, "covariance factors need finalize()");
    return cov_factors_;
  }

  // Starts a fresh accumulation: identity in exact-sum mode, zero in
  // momentum mode (the identity is added by finalize()).
  void reset_precision() {
    const int m = num_features();
    precisions_.assign(num_classes(), mode_ == PosteriorMode::kExactSum
                                          ? Matrix(Matrix::Identity(m, m))
                                          : Matrix(Matrix::Zero(m, m)));
    cov_factors_.clear();
    finalized_ = false;
    accumulated_ = false;
  }

  Matrix logits_mean(const Matrix& phi) const {
    if (phi.cols() != beta_hat_.rows()) {
      fail(ErrorCode::kDimensionMismatch, "logits_mean: features have " +
                                              std::to_string(phi.cols()) + " columns, beta has " +
                                              std::to_string(beta_hat_.rows()) + " rows");
    }
    return phi * beta_hat_;
  }

  void accumulate_precision(const Matrix& phi, const Matrix& probs) {
    require(!finalized_, ErrorCode::kAlreadyFinalized, "accumulate_precision after finalize");
    require_shape(phi, phi.rows(), num_features(), "accumulate_precision features");
    require_shape(probs, phi.rows(), num_classes(), "accumulate_precision probs");
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      double s = probs.row(i).sum();
      require(std::abs(s - 1.0) <= 1e-6 && probs.row(i).minCoeff() >= -1e-12,
              ErrorCode::kInvalidConfig, "accumulate_precision: probs row not on the simplex");
    }
    for (int c = 0; c < num_classes(); ++c) {
      Vector w = probs.col(c).array() * (1.0 - probs.col(c).array());
      Matrix weighted = phi.array().colwise() * w.array();
      Matrix term = weighted.transpose() * phi;
      term = 0.5 * (term + term.transpose());
      if (mode_ == PosteriorMode::kExactSum) {
        precisions_[c] += term;
      } else {
        precisions_[c] = momentum_ * precisions_[c] + (1.0 - momentum_) * term;
      }
    }
    accumulated_ = true;
  }

  // Computes the covariance factors from the precisions by a Cholesky
  // factorization and a triangular solve. With J the index-reversal
  // permutation and J P J = R R^T, the matrix L = J R^{-T} J is lower
  // triangular and L L^T = P^{-1}.
  void finalize() {
    require(!finalized_, ErrorCode::kAlreadyFinalized, "finalize called twice");
    require(accumulated_, ErrorCode::kInvalidConfig,
            "finalize requires at least one accumulation pass");
    const int m = num_features();
    if (mode_ == PosteriorMode::kMomentum) {
      for (Matrix& p : precisions_) p += Matrix::Identity(m, m);
    }
    cov_factors_.clear();
    for (const Matrix& p : precisions_) {
      Matrix reversed = p.reverse();
      CholeskyFactor chol = cholesky(reversed, 0.0);
      Matrix upper_inv = chol.lower.transpose().triangularView<Eigen::Upper>().solve(
          Matrix(Matrix::Identity(m, m)));
      Matrix lower = upper_inv.reverse();
      lower.triangularView<Eigen::StrictlyUpper>().setZero();
      cov_factors_.push_back(std::move(lower));
    }
    finalized_ = true;
  }

  // Lower Cholesky factors R_c of the current precisions (with the prior
  // identity included), so that R_c^{-T} z has covariance P_c^{-1}. Unlike
  // finalize() this never forms an explicit inverse.
  std::vector<Matrix> precision_factors() const {
    require(accumulated_, ErrorCode::kInvalidConfig,
            "precision_factors requires at least one accumulation pass");
    const int m = num_features();
    std::vector<Matrix> out;
    for (const Matrix& p : precisions_) {
      out.push_back(mode_ == PosteriorMode::kMomentum
                        ? cholesky(Matrix(p + Matrix::Identity(m, m)), 0.0).lower
                        : cholesky(p, 0.0).lower);
    }
    return out;
  }

  // Scales every precision, e.g. to drive the posterior covariance to zero.
  // Clears finalization.
  void scale_precision(double factor) {
    require(factor > 0.0, ErrorCode::kInvalidConfig, "precision scale must be > 0");
    for (Matrix& p : precisions_) p *= factor;
    cov_factors_.clear();
    finalized_ = false;
    accumulated_ = true;
  }

  // One posterior draw: column c is beta_hat_c + L_c z, z ~ N(0, I_m).
  Matrix sample_beta(Rng& rng) const {
    require(finalized_, ErrorCode::kNotFinalized, "sample_beta requires a finalized posterior");
    Matrix out(num_features(), num_classes());
    for (int c = 0; c < num_classes(); ++c) {
      Vector z = sample_gaussian_vector(rng, num_features());
      out.col(c) = beta_hat_.col(c) + cov_factors_[c] * z;
    }
    return out;
  }

  // S draws at once: result[c] is m x S with column s equal to the class-c
  // column of the s-th sample_beta() call on the same stream.
  std::vector<Matrix> sample_beta_block(Rng& rng, int samples) const {
    require(finalized_, ErrorCode::kNotFinalized, "sample_beta requires a finalized posterior");
    const int m = num_features();
    std::vector<Matrix> z(num_classes(), Matrix(m, samples));
    for (int s = 0; s < samples; ++s) {
      for (int c = 0; c < num_classes(); ++c) {
        for (int j = 0; j < m; ++j) z[c](j, s) = rng.normal();
      }
    }
    std::vector<Matrix> out;
    for (int c = 0; c < num_classes(); ++c) {
      Matrix b = cov_factors_[c] * z[c];
      b.colwise() += beta_hat_.col(c);
      out.push_back(std::move(b));
    }
    return out;
  }

  // Posterior variance of each class logit, phi^T Sigma_c phi, n x K.
  Matrix predictive_variance(const Matrix& phi) const {
    require(finalized_, ErrorCode::kNotFinalized, "predictive_variance requires finalize()");
    Matrix out(phi.rows(), num_classes());
    for (int c = 0; c < num_classes(); ++c) {
      Matrix proj = phi * cov_factors_[c];
      out.col(c) = proj.rowwise().squaredNorm();
    }
    return out;
  }

  // Restores posterior state (checkpoint loading). An empty `precisions`
  // leaves a freshly reset accumulator.
  void restore(Matrix beta_hat, std::vector<Matrix> precisions, std::vector<Matrix> cov_factors,
               bool finalized) {
    require(precisions.empty() || static_cast<Eigen::Index>(precisions.size()) == beta_hat.cols(),
            ErrorCode::kDimensionMismatch, "posterior restore: precision count");
    require(!finalized || static_cast<Eigen::Index>(cov_factors.size()) == beta_hat.cols(),
            ErrorCode::kDimensionMismatch, "posterior restore: covariance factor count");
    beta_hat_ = std::move(beta_hat);
    const bool have_precisions = !precisions.empty();
    if (have_precisions) {
      precisions_ = std::move(precisions);
    } else {
      reset_precision();
    }
    cov_factors_ = std::move(cov_factors);
    finalized_ = finalized;
    accumulated_ = have_precisions;
  }

  // Installs covariance factors directly without changing the precisions.
  void set_cov_factors(std::vector<Matrix> factors) {
    require(static_cast<int>(factors.size()) == num_classes(), ErrorCode::kDimensionMismatch,
            "set_cov_factors: factor count");
    cov_factors_ = std::move(factors);
    finalized_ = true;
  }

 private:
  Matrix beta_hat_;
  std::vector<Matrix> precisions_;
  std::vector<Matrix> cov_factors_;
  PosteriorMode mode_ = PosteriorMode::kExactSum;
  double momentum_ = 0.999;
  bool finalized_ = false;
  bool accumulated_ = false;
};

}  // namespace hetsngp

#endif  // HETSNGP_RFF_GP_HPP_
