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

// Classification and OOD-detection metrics: accuracy, NLL, ECE, AUROC and
// FPR at 95% in-distribution recall. Ties are resolved explicitly: argmax
// picks the lowest class index, AUROC counts tied pairs as 1/2.

#ifndef HETSNGP_METRICS_HPP_
#define HETSNGP_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "hetsngp/linalg.hpp"

namespace hetsngp {

struct EvalReport {
  double accuracy = 0.0;
  double nll = 0.0;
  double ece = 0.0;
  std::size_t n = 0;
};

struct OodReport {
  double auroc = 0.0;
  double fpr_at_95 = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

inline int argmax_row(const Matrix& probs, Eigen::Index i) {
  int best = 0;
  for (Eigen::Index c = 1; c < probs.cols(); ++c) {
    if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
  }
  return best;
}

inline std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out[i] = argmax_row(probs, i);
  return out;
}

namespace detail {

inline void check_probs_labels(const Matrix& probs, std::span<const int> labels,
                               const char* what) {
  require(probs.rows() > 0, ErrorCode::kEmptyInput, std::string(what) + ": empty input");
  require(static_cast<std::size_t>(probs.rows()) == labels.size(), ErrorCode::kDimensionMismatch,
          std::string(what) + ": probs rows != label count");
  for (int y : labels) {
    require(y >= 0 && y < probs.cols(), ErrorCode::kInvalidConfig,
            std::string(what) + ": label out of range");
  }
}

inline void check_scores_flags(std::span<const double> scores, std::span<const std::uint8_t> is_ood,
                               const char* what, std::size_t& n_id, std::size_t& n_ood) {
  require(scores.size() == is_ood.size(), ErrorCode::kDimensionMismatch,
          std::string(what) + ": scores and flags differ in length");
  n_ood = static_cast<std::size_t>(std::count_if(is_ood.begin(), is_ood.end(),
                                                 [](std::uint8_t f) { return f != 0; }));
  n_id = scores.size() - n_ood;
  require(n_id >= 1 && n_ood >= 1, ErrorCode::kOneClassOnly,
          std::string(what) + ": needs at least one in-distribution and one OOD point");
}

}  // namespace detail

inline double accuracy(const Matrix& probs, std::span<const int> labels) {
  detail::check_probs_labels(probs, labels, "accuracy");
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) correct += argmax_row(probs, i) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

inline double nll(const Matrix& probs, std::span<const int> labels, double floor = 1e-12) {
  detail::check_probs_labels(probs, labels, "nll");
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    total -= std::log(std::max(probs(i, labels[i]), floor));
  }
  return total / static_cast<double>(probs.rows());
}

// Equal-width bins over (0, 1], right-closed: confidence c falls in bin
// ceil(c * bins) - 1 (c = 0 goes to the first bin).
inline int ece_bin(double confidence, int bins) {
  int b = std::clamp(static_cast<int>(std::ceil(confidence * bins)) - 1, 0, bins - 1);
  // confidence * bins can round across an edge; compare against the edges
  // themselves so membership is exactly lo < c <= hi.
  while (b > 0 && confidence <= static_cast<double>(b) / bins) --b;
  while (b < bins - 1 && confidence > static_cast<double>(b + 1) / bins) ++b;
  return b;
}

inline double ece(const Matrix& probs, std::span<const int> labels, int bins = 15) {
  detail::check_probs_labels(probs, labels, "ece");
  require(bins >= 1, ErrorCode::kInvalidConfig, "ece: bins must be >= 1");
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> correct(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int pred = argmax_row(probs, i);
    double conf = probs(i, pred);
    int b = ece_bin(conf, bins);
    conf_sum[b] += conf;
    correct[b] += pred == labels[i] ? 1.0 : 0.0;
    ++count[b];
  }
  const double n = static_cast<double>(probs.rows());
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    total += (nb / n) * std::abs(correct[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

// Probability that a random OOD point scores above a random in-distribution
// point (ties count 1/2). Scores are uncertainties: higher means more OOD.
inline double auroc(std::span<const double> scores, std::span<const std::uint8_t> is_ood) {
  std::size_t n_id = 0, n_ood = 0;
  detail::check_scores_flags(scores, is_ood, "auroc", n_id, n_ood);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // U counts (ood, id) pairs with ood > id, plus 1/2 per tie.
  double u = 0.0;
  double id_below = 0.0;
  for (std::size_t g = 0; g < order.size();) {
    std::size_t end = g;
    double ood_in_group = 0.0, id_in_group = 0.0;
    while (end < order.size() && scores[order[end]] == scores[order[g]]) {
      (is_ood[order[end]] ? ood_in_group : id_in_group) += 1.0;
      ++end;
    }
    u += ood_in_group * id_below + 0.5 * ood_in_group * id_in_group;
    id_below += id_in_group;
    g = end;
  }
  return u / (static_cast<double>(n_ood) * static_cast<double>(n_id));
}

// False-positive rate at 95% recall of the in-distribution class. Scores are
// confidences (higher means more in-distribution). The threshold t is the
// largest value with #{ID : s >= t} >= 0.95 * n_id; the result is the
// fraction of OOD points with s >= t.
inline double fpr_at_95(std::span<const double> confidence, std::span<const std::uint8_t> is_ood) {
  std::size_t n_id = 0, n_ood = 0;
  detail::check_scores_flags(confidence, is_ood, "fpr_at_95", n_id, n_ood);
  std::vector<double> id_scores;
  id_scores.reserve(n_id);
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    if (!is_ood[i]) id_scores.push_back(confidence[i]);
  }
  std::sort(id_scores.begin(), id_scores.end(), std::greater<>());
  // Smallest k with 20 k >= 19 n_id, i.e. k >= 0.95 n_id in exact arithmetic.
  const std::size_t k = (19 * n_id + 19) / 20;
  const double threshold = id_scores[k - 1];
  std::size_t false_pos = 0;
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    if (is_ood[i] && confidence[i] >= threshold) ++false_pos;
  }
  return static_cast<double>(false_pos) / static_cast<double>(n_ood);
}

inline EvalReport evaluate(const Matrix& probs, std::span<const int> labels, int bins = 15) {
  EvalReport r;
  r.accuracy = accuracy(probs, labels);
  r.nll = nll(probs, labels);
  r.ece = ece(probs, labels, bins);
  r.n = labels.size();
  return r;
}

// Builds an OodReport from per-point uncertainty scores (1 - max prob) and
// max-probabilities of the same points.
inline OodReport evaluate_ood(std::span<const double> uncertainty,
                              std::span<const double> max_prob,
                              std::span<const std::uint8_t> is_ood) {
  OodReport r;
  r.auroc = auroc(uncertainty, is_ood);
  r.fpr_at_95 = fpr_at_95(max_prob, is_ood);
  detail::check_scores_flags(uncertainty, is_ood, "evaluate_ood", r.n_id, r.n_ood);
  return r;
}

}  // namespace hetsngp

#endif  // HETSNGP_METRICS_HPP_
