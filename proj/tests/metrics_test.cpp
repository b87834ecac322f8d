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

#include <gtest/gtest.h>

#include "hetsngp/metrics.hpp"
#include "oracles.hpp"

namespace hetsngp {
namespace {

Matrix random_probs(Rng& rng, int n, int k, bool coarse) {
  Matrix p(n, k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      double u = rng.uniform();
      // Coarse values put many confidences exactly on bin edges and create ties.
      p(i, c) = coarse ? std::floor(u * 4.0) + 1.0 : -std::log(1.0 - u);
    }
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

TEST(Metrics, HandComputedEce) {
  // Bin (2/5, 3/5]: two points at 0.5, one right. Bin (4/5, 1]: one at 1.0, right.
  Matrix p(3, 2);
  p << 0.5, 0.5, 0.5, 0.5, 0.0, 1.0;
  std::vector<int> y = {0, 1, 1};
  EXPECT_DOUBLE_EQ(ece(p, y, 5), (2.0 / 3.0) * std::abs(0.5 - 0.5) + (1.0 / 3.0) * 0.0);
  std::vector<int> wrong = {1, 1, 0};
  // argmax ties go to the first class, so row 0 and 1 predict class 0.
  EXPECT_DOUBLE_EQ(ece(p, wrong, 5), (2.0 / 3.0) * 0.5 + (1.0 / 3.0) * 1.0);
}

TEST(Metrics, EceBinEdges) {
  EXPECT_EQ(ece_bin(0.0, 15), 0);
  EXPECT_EQ(ece_bin(1.0, 15), 14);
  EXPECT_EQ(ece_bin(0.2, 15), 2);  // 0.2 * 15 rounds above 3
  EXPECT_EQ(ece_bin(0.5, 2), 0);
  EXPECT_EQ(ece_bin(std::nextafter(0.5, 1.0), 2), 1);
}

TEST(Metrics, AccuracyNllKnownValues) {
  Matrix p(2, 2);
  p << 0.9, 0.1, 0.3, 0.7;
  std::vector<int> y = {0, 0};
  EXPECT_DOUBLE_EQ(accuracy(p, y), 0.5);
  EXPECT_DOUBLE_EQ(nll(p, y), -(std::log(0.9) + std::log(0.3)) / 2.0);
  Matrix zero(1, 2);
  zero << 1.0, 0.0;
  std::vector<int> y1 = {1};
  EXPECT_DOUBLE_EQ(nll(zero, y1), -std::log(1e-12));
}

TEST(Metrics, AurocExtremesAndTies) {
  std::vector<double> s = {0.1, 0.2, 0.8, 0.9};
  std::vector<std::uint8_t> ood = {0, 0, 1, 1};
  EXPECT_EQ(auroc(s, ood), 1.0);
  std::vector<std::uint8_t> flipped = {1, 1, 0, 0};
  EXPECT_EQ(auroc(s, flipped), 0.0);
  std::vector<double> same(4, 0.3);
  EXPECT_EQ(auroc(same, ood), 0.5);
}

TEST(Metrics, Fpr95KnownValue) {
  // 20 ID confidences 1..20, threshold keeps 19 of them (>= 2).
  std::vector<double> conf;
  std::vector<std::uint8_t> ood;
  for (int i = 1; i <= 20; ++i) {
    conf.push_back(i);
    ood.push_back(0);
  }
  for (double c : {0.5, 1.5, 2.0, 30.0}) {
    conf.push_back(c);
    ood.push_back(1);
  }
  EXPECT_EQ(fpr_at_95(conf, ood), 0.5);
}

TEST(Metrics, InputValidation) {
  std::vector<double> s = {0.1, 0.2};
  std::vector<std::uint8_t> all_id = {0, 0};
  EXPECT_THROW(auroc(s, all_id), Error);
  Matrix p(1, 2);
  p << 0.5, 0.5;
  std::vector<int> bad = {2};
  EXPECT_THROW(nll(p, bad), Error);
}

TEST(Metrics, BruteForceAgreementOnRandomInstances) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(80));
    const int k = 2 + static_cast<int>(rng.below(4));
    const bool coarse = trial % 2 == 0;
    Matrix p = random_probs(rng, n, k, coarse);
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.below(k));
    ASSERT_EQ(accuracy(p, y), oracle::accuracy(p, y));
    ASSERT_EQ(nll(p, y), oracle::nll(p, y));
    ASSERT_EQ(ece(p, y, 15), oracle::ece(p, y, 15));

    std::vector<double> score(n);
    std::vector<std::uint8_t> ood(n);
    for (int i = 0; i < n; ++i) {
      score[i] = coarse ? std::floor(rng.uniform() * 5.0) : rng.uniform();
      ood[i] = i < 1 ? 0 : (i < 2 ? 1 : static_cast<std::uint8_t>(rng.below(2)));
    }
    ASSERT_EQ(auroc(score, ood), oracle::auroc(score, ood));
    ASSERT_EQ(fpr_at_95(score, ood), oracle::fpr_at_95(score, ood));
  }
}

}  // namespace
}  // namespace hetsngp
