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

#include <filesystem>
#include <fstream>

#include "hetsngp/data.hpp"

namespace hetsngp {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidConfig;
}

TEST(TwoMoons, NoiselessPointsLieOnArcs) {
  Dataset ds = two_moons(40, 0.0, 1);
  ASSERT_EQ(ds.size(), 40u);
  for (int i = 0; i < 40; ++i) {
    double cx = ds.y[i] == 0 ? 0.0 : 1.0;
    double cy = ds.y[i] == 0 ? 0.0 : 0.5;
    EXPECT_NEAR(std::hypot(ds.x(i, 0) - cx, ds.x(i, 1) - cy), 1.0, 1e-12);
    EXPECT_EQ(ds.y[i], i < 20 ? 0 : 1);
  }
  EXPECT_THROW(two_moons(3, 0.1, 1), Error);
}

TEST(TwoMoons, SeedControlsNoise) {
  EXPECT_EQ(two_moons(20, 0.1, 5).x, two_moons(20, 0.1, 5).x);
  EXPECT_NE(two_moons(20, 0.1, 5).x, two_moons(20, 0.1, 6).x);
}

TEST(Mixture, LayoutAndOodCluster) {
  MixtureParams p;
  p.n_per_class = 400;
  Dataset ds = gaussian_mixture_with_ood(p, 2);
  ASSERT_EQ(ds.size(), 3u * 400u + 150u);
  ASSERT_TRUE(ds.is_ood.has_value());
  Vector ood_mean = Vector::Zero(2);
  std::vector<Vector> class_mean(3, Vector::Zero(2));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Vector xi = ds.x.row(static_cast<Eigen::Index>(i)).transpose();
    if (ds.ood(i)) {
      ood_mean += xi / 150.0;
      EXPECT_EQ(ds.y[i], 0);
    } else {
      class_mean[ds.y[i]] += xi / 400.0;
    }
  }
  EXPECT_NEAR(ood_mean.norm(), 8.0, 0.15);
  for (const Vector& m : class_mean) {
    EXPECT_NEAR(m.norm(), 3.0, 0.2);
    EXPECT_GT((m - ood_mean).norm(), 5.0);
  }
  Dataset id = ds.select_ood(false);
  EXPECT_EQ(id.size(), 1200u);
  EXPECT_THROW(gaussian_mixture_with_ood(10, 1, 5, 8.0, 1), Error);
  EXPECT_NO_THROW(gaussian_mixture_with_ood(10, 3, 5, 0.0, 1));
}

TEST(Circles, RingsAndFlipRates) {
  Dataset ds = noisy_concentric_circles(20000, {1.0, 2.0, 3.0}, {0.05, 0.2, 0.4}, 0.1, 3);
  ASSERT_TRUE(ds.y_clean.has_value());
  std::array<double, 3> flipped{}, radius{};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int ring = (*ds.y_clean)[i];
    flipped[ring] += ds.y[i] != ring;
    radius[ring] += std::hypot(ds.x(static_cast<Eigen::Index>(i), 0),
                               ds.x(static_cast<Eigen::Index>(i), 1));
  }
  const std::array<double, 3> rates{0.05, 0.2, 0.4};
  for (int r = 0; r < 3; ++r) {
    EXPECT_NEAR(flipped[r] / 20000.0, rates[r], 0.012);
    EXPECT_NEAR(radius[r] / 20000.0, r + 1.0, 0.01);
  }
}

TEST(Circles, ZeroFlipMeansCleanLabels) {
  Dataset ds = noisy_concentric_circles(50, {1.0, 2.0, 3.0}, {0.0, 0.0, 0.0}, 0.1, 4);
  EXPECT_EQ(ds.y, *ds.y_clean);
  EXPECT_THROW(noisy_concentric_circles(5, {2.0, 1.0, 3.0}, {0.1, 0.1, 0.1}, 0.1, 1), Error);
  EXPECT_THROW(noisy_concentric_circles(5, {1.0, 2.0, 3.0}, {0.1, 1.0, 0.1}, 0.1, 1), Error);
}

TEST(Split, SizesAndOodPlacement) {
  Dataset ds = gaussian_mixture_with_ood(10, 3, 4, 8.0, 1);
  auto [train, test] = split(ds, {0.7, 0.3}, 9);
  EXPECT_EQ(train.size(), 21u);
  EXPECT_EQ(test.size(), 9u + 4u);
  for (std::size_t i = 0; i < train.size(); ++i) EXPECT_FALSE(train.ood(i));
  EXPECT_EQ(test.select_ood(true).size(), 4u);
  EXPECT_THROW(split(ds, {0.7, 0.2}, 1), Error);
  auto again = split(ds, {0.7, 0.3}, 9);
  EXPECT_EQ(again.first.x, train.x);
}

TEST(Standardizer, FitTransform) {
  Matrix x(4, 2);
  x << 1, 5, 3, 5, 5, 5, 7, 5;
  Standardizer s = Standardizer::fit(x);
  Matrix z = s.transform(x);
  EXPECT_NEAR(z.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(z.col(0).squaredNorm() / 4.0, 1.0, 1e-12);
  EXPECT_TRUE(z.col(1).allFinite());  // constant column hits the sd floor
  EXPECT_THROW(s.transform(Matrix::Ones(1, 3)), Error);
}

TEST(Csv, RoundTripPreservesEverything) {
  Dataset ds = noisy_concentric_circles(5, {1.0, 2.0, 3.0}, {0.2, 0.2, 0.2}, 0.1, 7);
  ds.is_ood = std::vector<std::uint8_t>(ds.size(), 0);
  (*ds.is_ood)[3] = 1;
  std::string text = to_csv(ds);
  Dataset back = load_csv_text(text, "label");
  EXPECT_EQ(back.x, ds.x);  // shortest round-trip formatting
  EXPECT_EQ(back.y, ds.y);
  EXPECT_EQ(*back.y_clean, *ds.y_clean);
  EXPECT_EQ(*back.is_ood, *ds.is_ood);
  EXPECT_EQ(back.feature_names, ds.feature_names);
  EXPECT_EQ(to_csv(back), text);
}

TEST(Csv, LabelsMapLexicographicallyOrByMapping) {
  std::string text = "a;b;cls\n1;2;zebra\n3;4;apple\n5;6;\"mid;dle\"\n";
  Dataset ds = load_csv_text(text, "cls", ';');
  EXPECT_EQ(ds.label_names, (std::vector<std::string>{"apple", "mid;dle", "zebra"}));
  EXPECT_EQ(ds.y, (std::vector<int>{2, 0, 1}));
  std::vector<std::string> fixed = {"zebra", "apple", "mid;dle"};
  Dataset mapped = load_csv_text(text, "cls", ';', &fixed);
  EXPECT_EQ(mapped.y, (std::vector<int>{0, 1, 2}));
  std::vector<std::string> partial = {"zebra"};
  EXPECT_EQ(code_of([&] { load_csv_text(text, "cls", ';', &partial); }), ErrorCode::kParseError);
}

TEST(Csv, ErrorCodes) {
  EXPECT_EQ(code_of([] { load_csv_text("x,y\n1,2\n", "label"); }), ErrorCode::kMissingColumn);
  EXPECT_EQ(code_of([] { load_csv_text("x,label\nabc,1\n", "label"); }),
            ErrorCode::kNonNumericFeature);
  EXPECT_EQ(code_of([] { load_csv_text("x,label\nnan,1\n", "label"); }),
            ErrorCode::kNonNumericFeature);
  EXPECT_EQ(code_of([] { load_csv_text("x,label\n1,2,3\n", "label"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { load_csv_text("", "label"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { load_csv("/nonexistent/file.csv"); }), ErrorCode::kIoError);
  EXPECT_EQ(code_of([] { load_csv_text("x,label,is_ood\n1,a,2\n", "label"); }),
            ErrorCode::kParseError);
}

TEST(Csv, HeaderOnlyIsEmpty) {
  Dataset ds = load_csv_text("x,label\n", "label");
  EXPECT_TRUE(ds.empty());
}

TEST(Csv, LoadsFromFile) {
  auto path = std::filesystem::temp_directory_path() / "hetsngp_data_test.csv";
  {
    std::ofstream out(path);
    out << "f1,label\r\n0.5,yes\r\n-1e3,no\r\n";
  }
  Dataset ds = load_csv(path.string());
  EXPECT_EQ(ds.x(1, 0), -1000.0);
  EXPECT_EQ(ds.y, (std::vector<int>{1, 0}));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace hetsngp
