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

// HetSNGP: spectral-normalized feature extractor, random-feature GP output
// layer with a Laplace posterior, and low-rank heteroscedastic logit noise.
// The same class also realizes the three ablations (deterministic, SNGP,
// heteroscedastic) by leaving out components.
//
// Training minimizes, per minibatch,
//
//   -1/n sum_i log( 1/S sum_s softmax(u_i^s / tau)[y_i] ) + penalties,
//   u_i^s = mean_logits_i + d(x_i) .* eps_K + V(x_i) eps_R,
//
// with the MAP weights beta_hat in the mean logits. Prediction averages S
// tempered softmaxes with beta additionally drawn from the Laplace posterior.

#ifndef HETSNGP_MODEL_HPP_
#define HETSNGP_MODEL_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetsngp/data.hpp"
#include "hetsngp/feature_net.hpp"
#include "hetsngp/het_noise.hpp"
#include "hetsngp/linalg.hpp"
#include "hetsngp/metrics.hpp"
#include "hetsngp/rff_gp.hpp"

namespace hetsngp {

enum class VariantKind { kDeterministic, kSngp, kHeteroscedastic, kHetSngp };

inline bool variant_has_gp(VariantKind k) {
  return k == VariantKind::kSngp || k == VariantKind::kHetSngp;
}
inline bool variant_has_het(VariantKind k) {
  return k == VariantKind::kHeteroscedastic || k == VariantKind::kHetSngp;
}

enum class LrSchedule { kConstant, kCosine };

// kPerBatch adds beta_penalty * |beta|^2 to every minibatch loss. kPerExample
// uses beta_penalty * |beta|^2 / (2 N), the prior term of the full-data log
// posterior divided by the training-set size N.
enum class BetaPenaltyScaling { kPerBatch, kPerExample };

// kLogMeanProb is the negative log of the Monte-Carlo predictive probability;
// kMeanLogProb averages per-sample cross-entropies instead.
enum class LossForm { kLogMeanProb, kMeanLogProb };

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 0.05;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  double sgd_momentum = 0.0;
  double weight_decay = 1e-4;
  double beta_penalty = 1.0;
  BetaPenaltyScaling beta_penalty_scaling = BetaPenaltyScaling::kPerExample;
  int mc_samples_train = 10;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool sample_beta = false;         // Monte-Carlo over beta during training
  bool laplace_extra_pass = false;  // recompute the precision with frozen beta_hat
  LossForm loss_form = LossForm::kLogMeanProb;

  void validate() const {
    require(batch_size >= 1, ErrorCode::kInvalidConfig, "batch_size must be >= 1");
    require(learning_rate > 0.0, ErrorCode::kInvalidConfig, "learning_rate must be > 0");
    require(sgd_momentum >= 0.0 && sgd_momentum < 1.0, ErrorCode::kInvalidConfig,
            "sgd_momentum must be in [0, 1)");
    require(weight_decay >= 0.0 && beta_penalty >= 0.0, ErrorCode::kInvalidConfig,
            "penalties must be >= 0");
    require(mc_samples_train >= 1, ErrorCode::kInvalidConfig, "mc_samples_train must be >= 1");
    require(temperature > 0.0, ErrorCode::kInvalidConfig, "temperature must be > 0");
    require(epochs >= 0, ErrorCode::kInvalidConfig, "epochs must be >= 0");
  }
};

struct PredictConfig {
  int mc_samples = 1000;
  double temperature = 1.0;
  bool map_mode = false;  // use beta_hat instead of posterior draws

  void validate() const {
    require(mc_samples >= 1, ErrorCode::kInvalidConfig, "mc_samples must be >= 1");
    require(temperature > 0.0, ErrorCode::kInvalidConfig, "temperature must be > 0");
  }
};

struct ModelConfig {
  VariantKind variant = VariantKind::kHetSngp;
  FeatureExtractorConfig net;
  RffConfig rff;
  HetHeadConfig het;
  TrainConfig train;
  PredictConfig predict;
};

struct ModelDims {
  int input_dim = 2;
  int num_classes = 2;
};

// Child-stream ids derived from the run seed.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kTrainNoise = 3;
inline constexpr std::uint64_t kPredict = 4;
inline constexpr std::uint64_t kBeta = 11;
inline constexpr std::uint64_t kNoise = 12;
}  // namespace streams

struct ModelGrads {
  LayerGrads net;
  Matrix head_weight;
  Vector head_bias;
  Matrix beta;
  std::optional<HetGrads> het;
};

struct LossAndGrads {
  double loss = 0.0;       // data term + penalties
  double data_loss = 0.0;  // mean negative log-likelihood term
  ModelGrads grads;
  Matrix mean_logits;
  Matrix phi;  // random features (GP variants)
};

class HetSngpModel {
 public:
  HetSngpModel() = default;

  HetSngpModel(ModelConfig config, const ModelDims& dims) : config_(std::move(config)) {
    require(dims.input_dim >= 1, ErrorCode::kInvalidConfig, "input_dim must be >= 1");
    require(dims.num_classes >= 2, ErrorCode::kInvalidConfig, "num_classes must be >= 2");
    config_.net.input_dim = dims.input_dim;
    config_.het.num_classes = dims.num_classes;
    if (!has_gp()) config_.net.spectral_normalization = false;
    config_.net.validate();
    config_.rff.validate();
    config_.train.validate();
    config_.predict.validate();
    if (has_het()) config_.het.validate();

    Rng init = Rng(config_.train.seed).split(streams::kInit);
    net_ = FeatureExtractor(config_.net, init);
    const int latent = config_.net.output_dim;
    const int k = dims.num_classes;
    if (has_gp()) {
      rff_ = RffProjection(config_.rff.num_features, latent, config_.rff.lengthscale, init);
      gp_ = GpPosterior(config_.rff.num_features, k, config_.rff.posterior_mode,
                        config_.rff.momentum);
      if (config_.net.spectral_normalization) net_.apply_spectral_normalization();
    } else {
      head_.weight = sample_gaussian(init, k, latent) / std::sqrt(static_cast<double>(latent));
      head_.bias = Vector::Zero(k);
      head_.u = Vector::Ones(k).normalized();
    }
    if (has_het()) het_.emplace(config_.het, latent, init);
  }

  // Assembles a model from explicit components (checkpoint loading).
  HetSngpModel(ModelConfig config, FeatureExtractor net, DenseLayer head, RffProjection rff,
               GpPosterior gp, std::optional<HetHead> het)
      : config_(std::move(config)),
        net_(std::move(net)),
        head_(std::move(head)),
        rff_(std::move(rff)),
        gp_(std::move(gp)),
        het_(std::move(het)) {}

  const ModelConfig& config() const { return config_; }
  ModelConfig& config() { return config_; }
  VariantKind variant() const { return config_.variant; }
  bool has_gp() const { return variant_has_gp(config_.variant); }
  bool has_het() const { return variant_has_het(config_.variant); }
  int num_classes() const { return config_.het.num_classes; }
  int input_dim() const { return config_.net.input_dim; }

  const FeatureExtractor& net() const { return net_; }
  FeatureExtractor& net() { return net_; }
  const DenseLayer& mean_head() const { return head_; }
  DenseLayer& mean_head() { return head_; }
  const RffProjection& rff() const { return rff_; }
  RffProjection& rff() { return rff_; }
  const GpPosterior& gp() const { return gp_; }
  GpPosterior& gp() { return gp_; }
  const std::optional<HetHead>& het() const { return het_; }
  std::optional<HetHead>& het() { return het_; }

  // Latent fed to the mean head: h(x), layer-normalized for GP variants when
  // enabled. The heteroscedastic head always reads the raw h(x).
  Matrix latent(const Matrix& x) const {
    Matrix h = net_.forward(x);
    return uses_layer_norm() ? layer_normalize(h) : h;
  }

  Matrix features(const Matrix& x) const {
    require(has_gp(), ErrorCode::kInvalidConfig, "random features exist only for GP variants");
    return rff_.featurize(latent(x));
  }

  Matrix mean_logits(const Matrix& x) const {
    Matrix z = latent(x);
    return has_gp() ? gp_.logits_mean(rff_.featurize(z)) : head_.apply(z);
  }

  std::optional<HetFactors> noise_factors(const Matrix& x) const {
    if (!het_) return std::nullopt;
    return het_->covariance_factors(net_.forward(x));
  }

  // Per-example size used by BetaPenaltyScaling::kPerExample.
  void set_train_size(std::size_t n) { train_size_ = n; }
  // Total optimizer steps, used by the cosine schedule.
  void set_total_steps(std::size_t n) { total_steps_ = n; }
  std::size_t step_count() const { return step_count_; }

  // Precision Cholesky factors used for beta draws during training
  // (sample_beta). While empty, training uses beta_hat without draws.
  void set_train_precision_factors(std::vector<Matrix> f) { train_precision_factors_ = std::move(f); }

  // Loss and exact gradients for one minibatch. All randomness comes from
  // child streams of `rng`, so repeated calls with the same rng see the same
  // noise (used by finite-difference checks).
  LossAndGrads loss_and_grads(const Matrix& x, std::span<const int> y, const Rng& rng) const {
    const Eigen::Index n = x.rows();
    const int k = num_classes();
    require(n >= 1, ErrorCode::kEmptyInput, "train step: empty batch");
    require(static_cast<std::size_t>(n) == y.size(), ErrorCode::kDimensionMismatch,
            "train step: x rows != label count");
    for (int label : y) {
      require(label >= 0 && label < k, ErrorCode::kInvalidConfig, "train step: label out of range");
    }
    const TrainConfig& tc = config_.train;
    const double tau = tc.temperature;

    LossAndGrads out;
    Tape tape;
    Matrix h = net_.forward(x, tape);
    const bool ln = uses_layer_norm();
    Matrix z = ln ? layer_normalize(h) : h;

    RffProjection::Cache rff_cache;
    if (has_gp()) {
      rff_cache = rff_.forward(z);
      out.phi = rff_cache.phi;
      out.mean_logits = out.phi * gp_.beta_hat();
    } else {
      out.mean_logits = head_.apply(z);
    }

    const bool noise = het_.has_value();
    const bool beta_mc = has_gp() && tc.sample_beta && !train_precision_factors_.empty();
    const int samples = (noise || beta_mc) ? tc.mc_samples_train : 1;

    // Per-sample deviations of the GP logits: dev_logits[c] is n x S.
    std::vector<Matrix> beta_dev;  // m x S per class
    std::vector<Matrix> dev_logits;
    if (beta_mc) {
      Rng beta_rng = rng.split(streams::kBeta);
      const int m = rff_.num_features();
      std::vector<Matrix> zs(k, Matrix(m, samples));
      for (int s = 0; s < samples; ++s) {
        for (int c = 0; c < k; ++c) {
          for (int j = 0; j < m; ++j) zs[c](j, s) = beta_rng.normal();
        }
      }
      for (int c = 0; c < k; ++c) {
        beta_dev.push_back(
            train_precision_factors_[c].transpose().triangularView<Eigen::Upper>().solve(zs[c]));
        dev_logits.push_back(out.phi * beta_dev.back());
      }
    }

    HetFactors factors;
    HetTape het_tape;
    NoiseDraw draw;
    if (noise) {
      factors = het_->covariance_factors(h, het_tape);
      draw = draw_noise(rng.split(streams::kNoise), samples, static_cast<int>(n), k,
                        het_->config().rank);
    }

    // Softmax of every sample, log p(y) per (sample, point).
    Matrix probs(static_cast<Eigen::Index>(samples) * n, k);
    Matrix log_py(samples, n);
    for (int s = 0; s < samples; ++s) {
      Matrix u = out.mean_logits;
      if (beta_mc) {
        for (int c = 0; c < k; ++c) u.col(c) += dev_logits[c].col(s);
      }
      if (noise) u += noise_for_sample(factors, draw, s);
      for (Eigen::Index i = 0; i < n; ++i) {
        RowVector zr = u.row(i) / tau;
        double mx = zr.maxCoeff();
        RowVector e = (zr.array() - mx).exp();
        double sum = e.sum();
        probs.row(static_cast<Eigen::Index>(s) * n + i) = e / sum;
        log_py(s, i) = zr[y[i]] - mx - std::log(sum);
      }
    }

    // Loss and dL/du for every sample.
    Matrix grad_u(static_cast<Eigen::Index>(samples) * n, k);
    double data_loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector weights(samples);
      if (tc.loss_form == LossForm::kLogMeanProb) {
        double mx = log_py.col(i).maxCoeff();
        double acc = 0.0;
        for (int s = 0; s < samples; ++s) acc += std::exp(log_py(s, i) - mx);
        double log_mean = mx + std::log(acc) - std::log(static_cast<double>(samples));
        data_loss -= log_mean;
        for (int s = 0; s < samples; ++s) weights[s] = std::exp(log_py(s, i) - mx) / acc;
      } else {
        data_loss -= log_py.col(i).mean();
        weights.setConstant(1.0 / samples);
      }
      for (int s = 0; s < samples; ++s) {
        const Eigen::Index row = static_cast<Eigen::Index>(s) * n + i;
        RowVector g = probs.row(row);
        g[y[i]] -= 1.0;
        grad_u.row(row) = g * (weights[s] / (tau * static_cast<double>(n)));
      }
    }
    data_loss /= static_cast<double>(n);

    Matrix grad_mu = Matrix::Zero(n, k);
    for (int s = 0; s < samples; ++s) grad_mu += grad_u.middleRows(static_cast<Eigen::Index>(s) * n, n);

    ModelGrads& g = out.grads;
    Matrix grad_z;
    if (has_gp()) {
      g.beta = out.phi.transpose() * grad_mu;
      Matrix grad_phi = grad_mu * gp_.beta_hat().transpose();
      if (beta_mc) {
        for (int c = 0; c < k; ++c) {
          Matrix gc(n, samples);
          for (int s = 0; s < samples; ++s) {
            gc.col(s) = grad_u.block(static_cast<Eigen::Index>(s) * n, c, n, 1);
          }
          grad_phi += gc * beta_dev[c].transpose();
        }
      }
      grad_z = rff_.backward(rff_cache, grad_phi);
    } else {
      g.head_weight = grad_mu.transpose() * z;
      g.head_bias = grad_mu.colwise().sum().transpose();
      grad_z = grad_mu * head_.weight;
    }
    Matrix grad_h = ln ? layer_normalize_backward(h, grad_z) : grad_z;
    if (noise) {
      Matrix grad_h_het;
      g.het = backward_noise(*het_, std::move(het_tape), factors, draw, grad_u, &grad_h_het);
      grad_h += grad_h_het;
    }
    g.net = net_.backward(std::move(tape), grad_h);

    // Penalties.
    double penalty = 0.0;
    const double wd = tc.weight_decay;
    auto decay = [&](auto& param, auto& grad) {
      penalty += wd * param.squaredNorm();
      grad += 2.0 * wd * param;
    };
    for (std::size_t l = 0; l < net_.layers().size(); ++l) {
      decay(net_.layers()[l].weight, g.net.weight[l]);
      decay(net_.layers()[l].bias, g.net.bias[l]);
    }
    if (has_gp()) {
      const double coef = beta_coefficient(static_cast<std::size_t>(n));
      penalty += coef * gp_.beta_hat().squaredNorm();
      g.beta += 2.0 * coef * gp_.beta_hat();
    } else {
      decay(head_.weight, g.head_weight);
      decay(head_.bias, g.head_bias);
    }
    if (noise) {
      HetGrads& hg = *g.het;
      decay(het_->v_weight(), hg.v_weight);
      decay(het_->v_bias(), hg.v_bias);
      if (!het_->standard()) decay(het_->free_v(), hg.free_v);
      decay(het_->d_weight(), hg.d_weight);
      decay(het_->d_bias(), hg.d_bias);
    }
    out.data_loss = data_loss;
    out.loss = data_loss + penalty;
    return out;
  }

  // Trainable parameters in a fixed order matching gradient_spans(ModelGrads&).
  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> out = net_.parameters();
    if (has_gp()) {
      out.emplace_back(gp_.beta_hat().data(), static_cast<std::size_t>(gp_.beta_hat().size()));
    } else {
      out.emplace_back(head_.weight.data(), static_cast<std::size_t>(head_.weight.size()));
      out.emplace_back(head_.bias.data(), static_cast<std::size_t>(head_.bias.size()));
    }
    if (het_) {
      for (auto sp : het_->parameters()) out.push_back(sp);
    }
    return out;
  }

  std::vector<std::span<double>> gradient_spans(ModelGrads& g) const {
    std::vector<std::span<double>> out = hetsngp::gradient_spans(g.net);
    if (has_gp()) {
      out.emplace_back(g.beta.data(), static_cast<std::size_t>(g.beta.size()));
    } else {
      out.emplace_back(g.head_weight.data(), static_cast<std::size_t>(g.head_weight.size()));
      out.emplace_back(g.head_bias.data(), static_cast<std::size_t>(g.head_bias.size()));
    }
    if (g.het) {
      for (auto sp : hetsngp::gradient_spans(*g.het)) out.push_back(sp);
    }
    return out;
  }

  struct StepResult {
    double loss = 0.0;
    Matrix mean_logits;
    Matrix phi;
  };

  // One SGD step (with momentum) on the minibatch, then spectral
  // normalization of the feature extractor for GP variants.
  StepResult step(const Matrix& x, std::span<const int> y, Rng& rng) {
    Rng step_rng = rng.split(rng.next_u64());
    LossAndGrads lg = loss_and_grads(x, y, step_rng);
    if (!std::isfinite(lg.loss)) {
      fail(ErrorCode::kNonFiniteLoss, "loss is " + std::to_string(lg.loss) + " at step " +
                                          std::to_string(step_count_) + " (data term " +
                                          std::to_string(lg.data_loss) + ")");
    }
    const TrainConfig& tc = config_.train;
    double lr = tc.learning_rate;
    if (tc.lr_schedule == LrSchedule::kCosine && total_steps_ > 0) {
      double frac = static_cast<double>(step_count_) / static_cast<double>(total_steps_);
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(frac, 1.0)));
    }
    auto params = parameters();
    auto grads = gradient_spans(lg.grads);
    if (velocity_.size() != params.size()) {
      velocity_.clear();
      for (auto p : params) velocity_.emplace_back(p.size(), 0.0);
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
      std::span<double> p = params[t];
      std::span<const double> gr = grads[t];
      std::vector<double>& v = velocity_[t];
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = tc.sgd_momentum * v[j] + gr[j];
        p[j] -= lr * v[j];
      }
    }
    if (net_.config().spectral_normalization) net_.apply_spectral_normalization(1);
    ++step_count_;
    return {lg.loss, std::move(lg.mean_logits), std::move(lg.phi)};
  }

  double train_step(const Matrix& x, std::span<const int> y, Rng& rng) {
    return step(x, y, rng).loss;
  }

  // Monte-Carlo predictive probabilities. Beta draws come from
  // rng.split(kBeta) and are shared by all points; noise for point i comes
  // from rng.split(kNoise).split(i).
  Matrix predict_proba(const Matrix& x, const PredictConfig& opts, const Rng& rng) const {
    opts.validate();
    const Eigen::Index n = x.rows();
    const int k = num_classes();
    const double tau = opts.temperature;
    const Matrix h = net_.forward(x);
    const Matrix z = uses_layer_norm() ? layer_normalize(h) : h;
    Matrix phi;
    Matrix mu;
    if (has_gp()) {
      phi = rff_.featurize(z);
      mu = gp_.logits_mean(phi);
    } else {
      mu = head_.apply(z);
    }
    const bool beta_mc = has_gp() && !opts.map_mode;
    if (beta_mc) {
      require(gp_.finalized(), ErrorCode::kNotFinalized,
              "predict_proba with posterior sampling requires a finalized GP posterior");
    }
    const bool noise = het_.has_value();
    if (!beta_mc && !noise) return softmax_rows(mu, tau);

    const int samples = opts.mc_samples;
    std::vector<Matrix> betas;
    if (beta_mc) {
      Rng beta_rng = rng.split(streams::kBeta);
      betas = gp_.sample_beta_block(beta_rng, samples);
    }
    std::optional<HetFactors> factors;
    if (noise) factors = het_->covariance_factors(h);
    const int rank = noise ? het_->config().rank : 0;
    const Rng noise_rng = rng.split(streams::kNoise);

    Matrix probs = Matrix::Zero(n, k);
    constexpr Eigen::Index kChunk = 256;
    std::vector<double> u(k), eps_k(k), eps_r(rank);
    for (Eigen::Index start = 0; start < n; start += kChunk) {
      const Eigen::Index len = std::min(kChunk, n - start);
      std::vector<Matrix> sampled;  // len x S per class
      if (beta_mc) {
        for (int c = 0; c < k; ++c) sampled.push_back(phi.middleRows(start, len) * betas[c]);
      }
      for (Eigen::Index li = 0; li < len; ++li) {
        const Eigen::Index i = start + li;
        Rng point_rng = noise_rng.split(static_cast<std::uint64_t>(i));
        Matrix v;
        if (noise) v = factors->factor(i);
        for (int s = 0; s < samples; ++s) {
          for (int c = 0; c < k; ++c) u[c] = beta_mc ? sampled[c](li, s) : mu(i, c);
          if (noise) {
            for (int c = 0; c < k; ++c) eps_k[c] = point_rng.normal();
            for (int j = 0; j < rank; ++j) eps_r[j] = point_rng.normal();
            for (int c = 0; c < k; ++c) {
              double acc = factors->diag(i, c) * eps_k[c];
              for (int j = 0; j < rank; ++j) acc += v(c, j) * eps_r[j];
              u[c] += acc;
            }
          }
          double mx = u[0] / tau;
          for (int c = 1; c < k; ++c) mx = std::max(mx, u[c] / tau);
          double sum = 0.0;
          for (int c = 0; c < k; ++c) {
            u[c] = std::exp(u[c] / tau - mx);
            sum += u[c];
          }
          for (int c = 0; c < k; ++c) probs(i, c) += u[c] / sum;
        }
        probs.row(i) /= probs.row(i).sum();
      }
    }
    return probs;
  }

  Matrix predict_proba(const Matrix& x, const Rng& rng) const {
    return predict_proba(x, config_.predict, rng);
  }

 private:
  bool uses_layer_norm() const { return has_gp() && config_.rff.layer_norm; }

  double beta_coefficient(std::size_t batch) const {
    const TrainConfig& tc = config_.train;
    if (tc.beta_penalty_scaling == BetaPenaltyScaling::kPerBatch) return tc.beta_penalty;
    const std::size_t n = train_size_ > 0 ? train_size_ : batch;
    return tc.beta_penalty / (2.0 * static_cast<double>(n));
  }

  ModelConfig config_;
  FeatureExtractor net_;
  DenseLayer head_;
  RffProjection rff_;
  GpPosterior gp_;
  std::optional<HetHead> het_;

  std::vector<Matrix> train_precision_factors_;
  std::vector<std::vector<double>> velocity_;
  std::size_t train_size_ = 0;
  std::size_t total_steps_ = 0;
  std::size_t step_count_ = 0;
};

// ---------------------------------------------------------------------------
// Free-function API

inline HetSngpModel build_variant(VariantKind kind, const ModelDims& dims, ModelConfig config) {
  config.variant = kind;
  return HetSngpModel(std::move(config), dims);
}

inline double train_step(HetSngpModel& model, const Matrix& x, std::span<const int> y, Rng& rng) {
  return model.train_step(x, y, rng);
}

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;  // running minibatch accuracy of the mean logits
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  double final_train_accuracy = 0.0;  // predict_proba accuracy after finalization
  double lengthscale = 0.0;
  std::size_t steps = 0;
};

namespace detail {

inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

}  // namespace detail

// Accumulates the Laplace precision over the whole dataset with the current
// parameters (no updates).
inline void accumulate_full_pass(HetSngpModel& model, const Dataset& data, int batch_size) {
  const auto n = static_cast<Eigen::Index>(data.size());
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index len = std::min<Eigen::Index>(batch_size, n - start);
    Matrix phi = model.features(data.x.middleRows(start, len));
    model.gp().accumulate_precision(phi, softmax_rows(model.gp().logits_mean(phi)));
  }
}

// Shuffled minibatch training; in the final epoch the Laplace precision is
// accumulated from every minibatch and the posterior is finalized.
inline TrainReport fit(HetSngpModel& model, const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (config.epochs < 1) fail(ErrorCode::kEmptySchedule, "epochs must be >= 1");
  require(!data.empty(), ErrorCode::kEmptyInput, "fit: empty dataset");
  data.validate();
  require(data.dim() == model.input_dim(), ErrorCode::kDimensionMismatch,
          "fit: dataset has " + std::to_string(data.dim()) + " features, model expects " +
              std::to_string(model.input_dim()));
  require(data.num_classes <= model.num_classes(), ErrorCode::kInvalidConfig,
          "fit: dataset has more classes than the model");
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(!data.ood(i), ErrorCode::kInvalidConfig, "fit: training data contains OOD rows");
  }

  model.config().train = config;
  const std::size_t n = data.size();
  const std::size_t batches_per_epoch =
      (n + static_cast<std::size_t>(config.batch_size) - 1) / static_cast<std::size_t>(config.batch_size);
  model.set_train_size(n);
  model.set_total_steps(batches_per_epoch * static_cast<std::size_t>(config.epochs));

  Rng root(config.seed);
  Rng shuffle_rng = root.split(streams::kShuffle);
  Rng noise_rng = root.split(streams::kTrainNoise);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const bool gp = model.has_gp();
  TrainReport report;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    const bool final_epoch = epoch == config.epochs - 1;
    const bool accumulate = gp && ((final_epoch && !config.laplace_extra_pass) || config.sample_beta);
    if (accumulate) model.gp().reset_precision();

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t start = b * static_cast<std::size_t>(config.batch_size);
      const std::size_t len = std::min<std::size_t>(config.batch_size, n - start);
      std::span<const std::size_t> rows(order.data() + start, len);
      Matrix xb = detail::gather_rows(data.x, rows);
      std::vector<int> yb(len);
      for (std::size_t r = 0; r < len; ++r) yb[r] = data.y[rows[r]];

      if (gp && epoch == 0 && b == 0 && model.config().rff.median_heuristic) {
        double l = median_pairwise_distance(model.latent(xb));
        model.rff().set_lengthscale(l > 0.0 ? l : 1.0);
      }
      HetSngpModel::StepResult r = model.step(xb, yb, noise_rng);
      if (accumulate) model.gp().accumulate_precision(r.phi, softmax_rows(r.mean_logits));
      loss_sum += r.loss * static_cast<double>(len);
      for (std::size_t i = 0; i < len; ++i) {
        correct += argmax_row(r.mean_logits, static_cast<Eigen::Index>(i)) == yb[i];
      }
    }
    if (gp && config.sample_beta && !final_epoch) {
      model.set_train_precision_factors(model.gp().precision_factors());
    }
    report.epochs.push_back({epoch + 1, loss_sum / static_cast<double>(n),
                             static_cast<double>(correct) / static_cast<double>(n)});
  }
  if (gp) {
    if (config.laplace_extra_pass) {
      model.gp().reset_precision();
      accumulate_full_pass(model, data, config.batch_size);
    }
    model.gp().finalize();
    report.lengthscale = model.rff().lengthscale();
  }
  report.steps = model.step_count();
  Rng predict_rng = Rng(config.seed).split(streams::kPredict);
  report.final_train_accuracy = accuracy(model.predict_proba(data.x, predict_rng), data.y);
  return report;
}

inline Matrix predict_proba(const HetSngpModel& model, const Matrix& x, int mc_samples,
                            const Rng& rng) {
  PredictConfig opts = model.config().predict;
  opts.mc_samples = mc_samples;
  return model.predict_proba(x, opts, rng);
}

inline std::vector<int> predict_label(const HetSngpModel& model, const Matrix& x, int mc_samples,
                                      const Rng& rng) {
  return argmax_rows(predict_proba(model, x, mc_samples, rng));
}

// 1 - max_c p(y = c | x); higher means more uncertain.
inline Vector uncertainty_from_probs(const Matrix& probs) {
  return (1.0 - probs.rowwise().maxCoeff().array()).matrix();
}

inline Vector uncertainty_score(const HetSngpModel& model, const Matrix& x, int mc_samples,
                                const Rng& rng) {
  return uncertainty_from_probs(predict_proba(model, x, mc_samples, rng));
}

// Mean of the members' predictive probabilities. Every member is evaluated
// with the same rng (common random numbers).
inline Matrix ensemble_predict(std::span<const HetSngpModel* const> models, const Matrix& x,
                               int mc_samples, const Rng& rng) {
  require(!models.empty(), ErrorCode::kInvalidConfig, "ensemble needs at least one member");
  const int k = models.front()->num_classes();
  for (const HetSngpModel* m : models) {
    require(m->num_classes() == k, ErrorCode::kHeterogeneousEnsemble,
            "ensemble members disagree on the number of classes");
  }
  Matrix sum = Matrix::Zero(x.rows(), k);
  for (const HetSngpModel* m : models) sum += predict_proba(*m, x, mc_samples, rng);
  return sum / static_cast<double>(models.size());
}

inline Matrix ensemble_predict(const std::vector<HetSngpModel>& models, const Matrix& x,
                               int mc_samples, const Rng& rng) {
  std::vector<const HetSngpModel*> ptrs;
  for (const HetSngpModel& m : models) ptrs.push_back(&m);
  return ensemble_predict(std::span<const HetSngpModel* const>(ptrs), x, mc_samples, rng);
}

}  // namespace hetsngp

#endif  // HETSNGP_MODEL_HPP_
