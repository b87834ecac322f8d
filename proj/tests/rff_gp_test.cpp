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

#include <Eigen/LU>

#include "hetsngp/rff_gp.hpp"
#include "oracles.hpp"

namespace hetsngp {
namespace {

Matrix random_simplex_rows(Rng& rng, int n, int k) {
  return softmax_rows(sample_gaussian(rng, n, k) * 2.0);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  Rng rng(1);
  Matrix h = sample_gaussian(rng, 6, 9) * 3.0;
  h.rowwise() += RowVector::Constant(9, 5.0);
  Matrix z = layer_normalize(h);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    EXPECT_NEAR(z.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR(z.row(i).squaredNorm() / 9.0, 1.0, 1e-5);
  }
}

TEST(LayerNorm, BackwardMatchesFiniteDifferences) {
  Rng rng(2);
  Matrix h = sample_gaussian(rng, 3, 7);
  Matrix r = sample_gaussian(rng, 3, 7);
  Matrix g = layer_normalize_backward(h, r);
  auto fd = oracle::finite_difference(std::span<double>(h.data(), h.size()),
                                      [&] { return layer_normalize(h).cwiseProduct(r).sum(); },
                                      1e-6);
  EXPECT_LE(oracle::relative_error(std::span<const double>(g.data(), g.size()), fd), 1e-7);
}

TEST(Rff, FeaturesMatchDefinition) {
  Rng rng(3);
  RffProjection rff(32, 4, 1.7, rng);
  Matrix h = sample_gaussian(rng, 5, 4);
  Matrix phi = rff.featurize(h);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 32; ++j) {
      double arg = rff.weight().row(j).dot(h.row(i)) / 1.7 + rff.bias()[j];
      EXPECT_NEAR(phi(i, j), std::sqrt(2.0 / 32) * std::cos(arg), 1e-15);
    }
  }
  for (double b : rff.bias()) {
    EXPECT_GE(b, 0.0);
    EXPECT_LT(b, 2.0 * std::numbers::pi);
  }
}

TEST(Rff, ForwardCacheAndBackward) {
  Rng rng(4);
  RffProjection rff(16, 3, 0.8, rng);
  Matrix h = sample_gaussian(rng, 4, 3);
  Matrix r = sample_gaussian(rng, 4, 16);
  RffProjection::Cache cache = rff.forward(h);
  EXPECT_EQ(cache.phi, rff.featurize(h));
  Matrix g = rff.backward(cache, r);
  auto fd = oracle::finite_difference(std::span<double>(h.data(), h.size()),
                                      [&] { return rff.featurize(h).cwiseProduct(r).sum(); }, 1e-6);
  EXPECT_LE(oracle::relative_error(std::span<const double>(g.data(), g.size()), fd), 1e-7);
}

TEST(Rff, KernelApproximationImprovesWithFeatures) {
  Rng rng(5);
  const double lengthscale = 1.3;
  auto mean_error = [&](int m) {
    RffProjection rff(m, 2, lengthscale, rng);
    double err = 0.0;
    for (int p = 0; p < 200; ++p) {
      Matrix a = sample_gaussian(rng, 1, 2);
      Matrix b = a + sample_uniform(rng, 1, 2, -lengthscale, lengthscale);
      double approx = (rff.featurize(a) * rff.featurize(b).transpose())(0, 0);
      err += std::abs(approx - oracle::rbf(a, b, lengthscale));
    }
    return err / 200.0;
  };
  double coarse = mean_error(64);
  double fine = mean_error(4096);
  EXPECT_LT(fine, coarse);
  EXPECT_LT(fine, 0.03);
}

TEST(Rff, MedianPairwiseDistance) {
  Matrix h(3, 1);
  h << 0.0, 1.0, 3.0;  // distances 1, 3, 2
  EXPECT_EQ(median_pairwise_distance(h), 2.0);
  EXPECT_THROW(median_pairwise_distance(Matrix::Zero(1, 1)), Error);
}

TEST(GpPosterior, PrecisionMatchesDirectSum) {
  Rng rng(6);
  GpPosterior gp(8, 3);
  Matrix phi1 = sample_gaussian(rng, 4, 8), phi2 = sample_gaussian(rng, 6, 8);
  Matrix p1 = random_simplex_rows(rng, 4, 3), p2 = random_simplex_rows(rng, 6, 3);
  gp.accumulate_precision(phi1, p1);
  gp.accumulate_precision(phi2, p2);
  Matrix phi(10, 8), probs(10, 3);
  phi << phi1, phi2;
  probs << p1, p2;
  auto ref = oracle::laplace_precisions(phi, probs);
  for (int c = 0; c < 3; ++c) {
    EXPECT_LE((gp.precisions()[c] - ref[c]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GpPosterior, CovarianceFactorIsLowerAndInvertsPrecision) {
  Rng rng(7);
  GpPosterior gp(10, 2);
  gp.accumulate_precision(sample_gaussian(rng, 30, 10), random_simplex_rows(rng, 30, 2));
  gp.finalize();
  for (int c = 0; c < 2; ++c) {
    const Matrix& l = gp.cov_factors()[c];
    EXPECT_EQ(l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff(), 0.0);
    Matrix cov = l * l.transpose();
    EXPECT_LE((cov * gp.precisions()[c] - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(GpPosterior, MomentumModeAddsIdentityAtFinalize) {
  Rng rng(8);
  GpPosterior gp(4, 2, PosteriorMode::kMomentum, 0.5);
  Matrix phi = sample_gaussian(rng, 5, 4);
  Matrix p = random_simplex_rows(rng, 5, 2);
  gp.accumulate_precision(phi, p);
  gp.accumulate_precision(phi, p);
  auto ref = oracle::laplace_precisions(phi, p);
  Matrix expected = 0.75 * (ref[0] - Matrix::Identity(4, 4));
  EXPECT_LE((gp.precisions()[0] - expected).cwiseAbs().maxCoeff(), 1e-12);
  gp.finalize();
  EXPECT_LE((gp.precisions()[0] - expected - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GpPosterior, LifecycleErrors) {
  GpPosterior gp(3, 2);
  EXPECT_THROW(gp.finalize(), Error);  // nothing accumulated
  Rng rng(9);
  EXPECT_THROW(gp.sample_beta(rng), Error);
  gp.accumulate_precision(Matrix::Ones(1, 3), Matrix::Constant(1, 2, 0.5));
  Matrix not_simplex = Matrix::Constant(1, 2, 0.7);
  EXPECT_THROW(gp.accumulate_precision(Matrix::Ones(1, 3), not_simplex), Error);
  gp.finalize();
  try {
    gp.finalize();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlreadyFinalized);
  }
  EXPECT_THROW(gp.accumulate_precision(Matrix::Ones(1, 3), Matrix::Constant(1, 2, 0.5)), Error);
}

TEST(GpPosterior, SampleMomentsMatchPosterior) {
  Rng rng(10);
  GpPosterior gp(3, 2);
  gp.beta_hat().col(0) << 1.0, -2.0, 0.5;
  gp.accumulate_precision(sample_gaussian(rng, 8, 3), Matrix::Constant(8, 2, 0.5));
  gp.finalize();
  Matrix cov = gp.cov_factors()[0] * gp.cov_factors()[0].transpose();
  const int draws = 40000;
  Matrix samples(draws, 3);
  for (int s = 0; s < draws; ++s) samples.row(s) = gp.sample_beta(rng).col(0).transpose();
  RowVector mean = samples.colwise().mean();
  EXPECT_LE((mean - gp.beta_hat().col(0).transpose()).cwiseAbs().maxCoeff(), 0.03);
  Matrix centered = samples.rowwise() - mean;
  Matrix emp = centered.transpose() * centered / (draws - 1.0);
  EXPECT_LE((emp - cov).cwiseAbs().maxCoeff(), 0.03);
}

TEST(GpPosterior, BlockSamplingMatchesSequentialDraws) {
  Rng rng(11);
  GpPosterior gp(5, 2);
  gp.accumulate_precision(sample_gaussian(rng, 9, 5), random_simplex_rows(rng, 9, 2));
  gp.finalize();
  Rng a(99), b(99);
  auto block = gp.sample_beta_block(a, 3);
  for (int s = 0; s < 3; ++s) {
    Matrix one = gp.sample_beta(b);
    for (int c = 0; c < 2; ++c) {
      EXPECT_LE((block[c].col(s) - one.col(c)).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(GpPosterior, PredictiveVarianceIsQuadraticForm) {
  Rng rng(12);
  GpPosterior gp(6, 2);
  gp.accumulate_precision(sample_gaussian(rng, 10, 6), random_simplex_rows(rng, 10, 2));
  gp.finalize();
  Matrix phi = sample_gaussian(rng, 3, 6);
  Matrix var = gp.predictive_variance(phi);
  for (int c = 0; c < 2; ++c) {
    Matrix sigma = gp.precisions()[c].inverse();
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(var(i, c), phi.row(i) * sigma * phi.row(i).transpose(), 1e-12);
    }
  }
}

}  // namespace
TEST(GpPosterior, PrecisionFactorsWhitenToCovariance) {
  Rng rng(12);
  for (PosteriorMode mode : {PosteriorMode::kExactSum, PosteriorMode::kMomentum}) {
    GpPosterior gp(5, 2, mode, 0.9);
    gp.accumulate_precision(sample_gaussian(rng, 7, 5), softmax_rows(sample_gaussian(rng, 7, 2)));
    std::vector<Matrix> r = gp.precision_factors();
    GpPosterior copy = gp;
    copy.finalize();
    for (int c = 0; c < 2; ++c) {
      Matrix r_inv = r[c].inverse();
      Matrix from_r = r_inv.transpose() * r_inv;
      Matrix from_l = copy.cov_factors()[c] * copy.cov_factors()[c].transpose();
      EXPECT_LE((from_r - from_l).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

}  // namespace hetsngp
