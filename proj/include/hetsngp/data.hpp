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

// Datasets: synthetic generators for the 2-D benchmarks, CSV ingestion and
// export, seeded train/test splitting and feature standardization.

#ifndef HETSNGP_DATA_HPP_
#define HETSNGP_DATA_HPP_

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hetsngp/linalg.hpp"

namespace hetsngp {

struct Dataset {
  Matrix x;
  std::vector<int> y;
  std::optional<std::vector<int>> y_clean;
  std::optional<std::vector<std::uint8_t>> is_ood;
  int num_classes = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> label_names;  // index -> original label

  std::size_t size() const { return y.size(); }
  int dim() const { return static_cast<int>(x.cols()); }
  bool empty() const { return y.empty(); }

  bool ood(std::size_t i) const { return is_ood.has_value() && (*is_ood)[i] != 0; }

  void validate() const {
    const auto n = static_cast<Eigen::Index>(y.size());
    require(x.rows() == n, ErrorCode::kDimensionMismatch, "dataset: x rows != label count");
    require(num_classes >= 1, ErrorCode::kInvalidConfig, "dataset: num_classes must be >= 1");
    for (int label : y) {
      require(label >= 0 && label < num_classes, ErrorCode::kInvalidConfig,
              "dataset: label " + std::to_string(label) + " outside [0, " +
                  std::to_string(num_classes) + ")");
    }
    require(x.allFinite(), ErrorCode::kInvalidConfig, "dataset: non-finite feature value");
    if (y_clean) {
      require(y_clean->size() == y.size(), ErrorCode::kDimensionMismatch, "dataset: y_clean size");
    }
    if (is_ood) {
      require(is_ood->size() == y.size(), ErrorCode::kDimensionMismatch, "dataset: is_ood size");
    }
  }

  Dataset subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.num_classes = num_classes;
    out.feature_names = feature_names;
    out.label_names = label_names;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    out.y.reserve(rows.size());
    if (y_clean) out.y_clean.emplace();
    if (is_ood) out.is_ood.emplace();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::size_t r = rows[k];
      out.x.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(r));
      out.y.push_back(y[r]);
      if (y_clean) out.y_clean->push_back((*y_clean)[r]);
      if (is_ood) out.is_ood->push_back((*is_ood)[r]);
    }
    return out;
  }

  // Rows selected by OOD flag (rows without flags count as in-distribution).
  Dataset select_ood(bool want_ood) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < size(); ++i) {
      if (ood(i) == want_ood) rows.push_back(i);
    }
    return subset(rows);
  }
};

namespace detail {

inline std::vector<std::string> default_feature_names(int d) {
  std::vector<std::string> names;
  for (int j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

inline std::vector<std::string> default_label_names(int k) {
  std::vector<std::string> names;
  for (int c = 0; c < k; ++c) names.push_back(std::to_string(c));
  return names;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generators

// Two interleaving half circles of unit radius: class 0 on the upper arc
// centred at the origin, class 1 on the lower arc centred at (1, 0.5).
inline Dataset two_moons(int n, double noise_sd, std::uint64_t seed) {
  require(n >= 2 && n % 2 == 0, ErrorCode::kInvalidConfig, "two_moons: n must be even and >= 2");
  require(noise_sd >= 0.0, ErrorCode::kInvalidConfig, "two_moons: noise_sd must be >= 0");
  Rng rng(seed);
  const int half = n / 2;
  Dataset ds;
  ds.num_classes = 2;
  ds.x.resize(n, 2);
  ds.y.resize(n);
  for (int i = 0; i < half; ++i) {
    double t = half > 1 ? std::numbers::pi * i / (half - 1) : 0.0;
    ds.x(i, 0) = std::cos(t);
    ds.x(i, 1) = std::sin(t);
    ds.y[i] = 0;
    ds.x(half + i, 0) = 1.0 - std::cos(t);
    ds.x(half + i, 1) = 0.5 - std::sin(t);
    ds.y[half + i] = 1;
  }
  if (noise_sd > 0.0) {
    for (Eigen::Index i = 0; i < ds.x.size(); ++i) ds.x.data()[i] += noise_sd * rng.normal();
  }
  ds.feature_names = detail::default_feature_names(2);
  ds.label_names = detail::default_label_names(2);
  return ds;
}

struct MixtureParams {
  int n_per_class = 200;
  int k_classes = 3;
  int ood_n = 150;
  double ood_offset = 8.0;
  double radius = 3.0;   // blob means lie on this circle
  double blob_sd = 1.0;
  double ood_sd = 0.5;
};

// k unit-variance Gaussian blobs with means on a circle, plus an OOD cluster
// centred ood_offset away from the centroid, halfway (in angle) between two
// neighbouring blobs. OOD rows carry label 0 and is_ood = 1.
inline Dataset gaussian_mixture_with_ood(const MixtureParams& p, std::uint64_t seed) {
  require(p.k_classes >= 2, ErrorCode::kInvalidConfig, "mixture: k_classes must be >= 2");
  require(p.n_per_class >= 1, ErrorCode::kInvalidConfig, "mixture: n_per_class must be >= 1");
  require(p.ood_n >= 0, ErrorCode::kInvalidConfig, "mixture: ood_n must be >= 0");
  require(p.ood_offset >= 0.0, ErrorCode::kInvalidConfig, "mixture: ood_offset must be >= 0");
  require(p.blob_sd >= 0.0 && p.ood_sd >= 0.0 && p.radius > 0.0, ErrorCode::kInvalidConfig,
          "mixture: scales must be nonnegative");
  Rng rng(seed);
  const int n_id = p.n_per_class * p.k_classes;
  const int n = n_id + p.ood_n;
  Dataset ds;
  ds.num_classes = p.k_classes;
  ds.x.resize(n, 2);
  ds.y.resize(n);
  ds.is_ood.emplace(n, 0);
  const double step = 2.0 * std::numbers::pi / p.k_classes;
  int row = 0;
  for (int c = 0; c < p.k_classes; ++c) {
    const double angle = std::numbers::pi / 2.0 + c * step;
    const double mx = p.radius * std::cos(angle);
    const double my = p.radius * std::sin(angle);
    for (int i = 0; i < p.n_per_class; ++i, ++row) {
      ds.x(row, 0) = mx + p.blob_sd * rng.normal();
      ds.x(row, 1) = my + p.blob_sd * rng.normal();
      ds.y[row] = c;
    }
  }
  const double ood_angle = std::numbers::pi / 2.0 - step / 2.0;
  const double ox = p.ood_offset * std::cos(ood_angle);
  const double oy = p.ood_offset * std::sin(ood_angle);
  for (int i = 0; i < p.ood_n; ++i, ++row) {
    ds.x(row, 0) = ox + p.ood_sd * rng.normal();
    ds.x(row, 1) = oy + p.ood_sd * rng.normal();
    ds.y[row] = 0;
    (*ds.is_ood)[row] = 1;
  }
  ds.feature_names = detail::default_feature_names(2);
  ds.label_names = detail::default_label_names(p.k_classes);
  return ds;
}

inline Dataset gaussian_mixture_with_ood(int n_per_class, int k_classes, int ood_n,
                                         double ood_offset, std::uint64_t seed) {
  MixtureParams p;
  p.n_per_class = n_per_class;
  p.k_classes = k_classes;
  p.ood_n = ood_n;
  p.ood_offset = ood_offset;
  return gaussian_mixture_with_ood(p, seed);
}

struct CirclesParams {
  int n_per_class = 100;
  std::array<double, 3> radii{1.0, 2.0, 3.0};
  std::array<double, 3> flip_rates{0.05, 0.20, 0.40};
  double radial_sd = 0.12;
};

// Three rings centred at the origin. y_clean is the ring index; y is flipped
// to a uniformly chosen other class with the ring's flip rate.
inline Dataset noisy_concentric_circles(const CirclesParams& p, std::uint64_t seed) {
  require(p.n_per_class >= 1, ErrorCode::kInvalidConfig, "circles: n_per_class must be >= 1");
  require(p.radii[0] > 0.0 && p.radii[0] < p.radii[1] && p.radii[1] < p.radii[2],
          ErrorCode::kInvalidConfig, "circles: radii must be positive and strictly increasing");
  for (double f : p.flip_rates) {
    require(f >= 0.0 && f < 1.0, ErrorCode::kInvalidConfig, "circles: flip rates must be in [0,1)");
  }
  require(p.radial_sd >= 0.0, ErrorCode::kInvalidConfig, "circles: radial_sd must be >= 0");
  Rng rng(seed);
  const int n = 3 * p.n_per_class;
  Dataset ds;
  ds.num_classes = 3;
  ds.x.resize(n, 2);
  ds.y.resize(n);
  ds.y_clean.emplace(n);
  int row = 0;
  for (int ring = 0; ring < 3; ++ring) {
    for (int i = 0; i < p.n_per_class; ++i, ++row) {
      double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double r = p.radii[ring] + p.radial_sd * rng.normal();
      ds.x(row, 0) = r * std::cos(angle);
      ds.x(row, 1) = r * std::sin(angle);
      (*ds.y_clean)[row] = ring;
      int label = ring;
      if (rng.uniform() < p.flip_rates[ring]) {
        int other = static_cast<int>(rng.below(2));
        label = other >= ring ? other + 1 : other;
      }
      ds.y[row] = label;
    }
  }
  ds.feature_names = detail::default_feature_names(2);
  ds.label_names = detail::default_label_names(3);
  return ds;
}

inline Dataset noisy_concentric_circles(int n_per_class, std::array<double, 3> radii,
                                        std::array<double, 3> flip_rates, double radial_sd,
                                        std::uint64_t seed) {
  return noisy_concentric_circles(CirclesParams{n_per_class, radii, flip_rates, radial_sd}, seed);
}

// ---------------------------------------------------------------------------
// Split and standardization

// Seeded permutation split of the in-distribution rows into (train, test)
// with sizes round(f_train * n_id) and the remainder. OOD-flagged rows always
// go to the test side.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, std::array<double, 2> fractions,
                                         std::uint64_t seed) {
  require(fractions[0] >= 0.0 && fractions[1] >= 0.0 &&
              std::abs(fractions[0] + fractions[1] - 1.0) <= 1e-9,
          ErrorCode::kInvalidConfig, "split: fractions must be nonnegative and sum to 1");
  std::vector<std::size_t> id_rows;
  std::vector<std::size_t> ood_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.ood(i) ? ood_rows : id_rows).push_back(i);
  Rng rng(seed);
  for (std::size_t i = id_rows.size(); i > 1; --i) {
    std::swap(id_rows[i - 1], id_rows[rng.below(i)]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::floor(fractions[0] * static_cast<double>(id_rows.size()) + 0.5));
  std::vector<std::size_t> train(id_rows.begin(), id_rows.begin() + n_train);
  std::vector<std::size_t> test(id_rows.begin() + n_train, id_rows.end());
  test.insert(test.end(), ood_rows.begin(), ood_rows.end());
  return {ds.subset(train), ds.subset(test)};
}

struct Standardizer {
  Vector mean;
  Vector sd;

  static constexpr double kSdFloor = 1e-8;

  static Standardizer fit(const Matrix& x) {
    require(x.rows() >= 1, ErrorCode::kEmptyInput, "standardizer: empty training data");
    Standardizer s;
    const double n = static_cast<double>(x.rows());
    s.mean = x.colwise().sum().transpose() / n;
    s.sd.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double var = (x.col(j).array() - s.mean[j]).square().sum() / n;
      s.sd[j] = std::max(std::sqrt(var), kSdFloor);
    }
    return s;
  }

  static Standardizer identity(int dim) {
    return {Vector::Zero(dim), Vector::Ones(dim)};
  }

  Matrix transform(const Matrix& x) const {
    require(x.cols() == mean.size(), ErrorCode::kDimensionMismatch,
            "standardizer: feature count mismatch");
    Matrix out = x.rowwise() - mean.transpose();
    return out.array().rowwise() / sd.transpose().array();
  }
};

struct StandardizedSplit {
  Dataset train;
  Dataset test;
  Standardizer standardizer;
};

inline StandardizedSplit standardize_fit_transform(Dataset train, Dataset test) {
  Standardizer s = Standardizer::fit(train.x);
  train.x = s.transform(train.x);
  if (!test.empty()) test.x = s.transform(test.x);
  return {std::move(train), std::move(test), std::move(s)};
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

// Splits RFC-4180 text into records. Quoted fields may contain delimiters,
// doubled quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv_records(const std::string& text,
                                                               char delimiter) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (ch == delimiter) {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (ch == '\n') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
      records.push_back(std::move(record));
      record.clear();
      ++line;
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (in_quotes) {
    fail(ErrorCode::kParseError, "csv: unterminated quoted field at line " + std::to_string(line));
  }
  if (field_started || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

inline bool parse_double(const std::string& s, double& out) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return false;
  const char* first = s.data() + b;
  const char* last = s.data() + e + 1;
  if (*first == '+') ++first;
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

inline std::string csv_quote(const std::string& s, char delimiter) {
  if (s.find_first_of(std::string("\"\n\r") + delimiter) == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline constexpr const char* kCleanLabelColumn = "y_clean";
inline constexpr const char* kOodColumn = "is_ood";

// Reads a CSV with a header row. The label column is categorical; labels map
// to [0, K) in lexicographic order unless `label_names` supplies a fixed
// mapping. Optional columns y_clean (labels) and is_ood (0/1) are recognized
// by name; every other column must be numeric.
inline Dataset load_csv_text(const std::string& text, const std::string& label_column,
                             char delimiter = ',',
                             const std::vector<std::string>* label_names = nullptr) {
  auto records = detail::parse_csv_records(text, delimiter);
  while (!records.empty() && records.back().size() == 1 && records.back()[0].empty()) {
    records.pop_back();
  }
  require(!records.empty(), ErrorCode::kParseError, "csv: missing header row");
  const std::vector<std::string>& header = records[0];
  int label_col = -1;
  int clean_col = -1;
  int ood_col = -1;
  std::vector<int> feature_cols;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) {
    if (header[j] == label_column) label_col = j;
    else if (header[j] == kCleanLabelColumn) clean_col = j;
    else if (header[j] == kOodColumn) ood_col = j;
    else feature_cols.push_back(j);
  }
  if (label_col < 0) fail(ErrorCode::kMissingColumn, "csv: no column named '" + label_column + "'");

  const std::size_t n = records.size() - 1;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      fail(ErrorCode::kParseError, "csv: row " + std::to_string(r + 1) + " has " +
                                       std::to_string(records[r].size()) + " fields, header has " +
                                       std::to_string(header.size()));
    }
  }

  std::vector<std::string> names;
  if (label_names != nullptr) {
    names = *label_names;
  } else {
    std::map<std::string, int> seen;
    for (std::size_t r = 1; r < records.size(); ++r) seen.emplace(records[r][label_col], 0);
    if (clean_col >= 0) {
      for (std::size_t r = 1; r < records.size(); ++r) seen.emplace(records[r][clean_col], 0);
    }
    for (const auto& kv : seen) names.push_back(kv.first);
  }
  std::map<std::string, int> index;
  for (int c = 0; c < static_cast<int>(names.size()); ++c) index[names[c]] = c;
  auto lookup = [&](std::size_t r, int col) {
    auto it = index.find(records[r][col]);
    if (it == index.end()) {
      fail(ErrorCode::kParseError, "csv: row " + std::to_string(r + 1) + ", column " +
                                       std::to_string(col + 1) + ": unknown label '" +
                                       records[r][col] + "'");
    }
    return it->second;
  };

  Dataset ds;
  ds.num_classes = std::max<int>(1, static_cast<int>(names.size()));
  ds.label_names = names;
  for (int j : feature_cols) ds.feature_names.push_back(header[j]);
  ds.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feature_cols.size()));
  ds.y.resize(n);
  if (clean_col >= 0) ds.y_clean.emplace(n);
  if (ood_col >= 0) ds.is_ood.emplace(n);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const std::size_t i = r - 1;
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      double v = 0.0;
      if (!detail::parse_double(records[r][feature_cols[k]], v)) {
        fail(ErrorCode::kNonNumericFeature,
             "csv: row " + std::to_string(r + 1) + ", column " + std::to_string(feature_cols[k] + 1) +
                 " ('" + header[feature_cols[k]] + "'): '" + records[r][feature_cols[k]] +
                 "' is not a finite number");
      }
      ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
    }
    ds.y[i] = lookup(r, label_col);
    if (clean_col >= 0) (*ds.y_clean)[i] = lookup(r, clean_col);
    if (ood_col >= 0) {
      const std::string& f = records[r][ood_col];
      if (f != "0" && f != "1") {
        fail(ErrorCode::kParseError, "csv: row " + std::to_string(r + 1) + ", column " +
                                         std::to_string(ood_col + 1) + ": is_ood must be 0 or 1");
      }
      (*ds.is_ood)[i] = f == "1" ? 1 : 0;
    }
  }
  return ds;
}

inline Dataset load_csv(const std::string& path, const std::string& label_column = "label",
                        char delimiter = ',',
                        const std::vector<std::string>* label_names = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return load_csv_text(buf.str(), label_column, delimiter, label_names);
}

// Writes features, the label column, then y_clean / is_ood when present.
inline std::string to_csv(const Dataset& ds, const std::string& label_column = "label",
                          char delimiter = ',') {
  std::string out;
  std::vector<std::string> fnames = ds.feature_names.size() == static_cast<std::size_t>(ds.dim())
                                        ? ds.feature_names
                                        : detail::default_feature_names(ds.dim());
  std::vector<std::string> lnames = ds.label_names.size() == static_cast<std::size_t>(ds.num_classes)
                                        ? ds.label_names
                                        : detail::default_label_names(ds.num_classes);
  for (const auto& f : fnames) out += detail::csv_quote(f, delimiter) + delimiter;
  out += detail::csv_quote(label_column, delimiter);
  if (ds.y_clean) out += std::string(1, delimiter) + kCleanLabelColumn;
  if (ds.is_ood) out += std::string(1, delimiter) + kOodColumn;
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < ds.dim(); ++j) {
      out += detail::format_double(ds.x(static_cast<Eigen::Index>(i), j)) + delimiter;
    }
    out += detail::csv_quote(lnames[ds.y[i]], delimiter);
    if (ds.y_clean) out += delimiter + detail::csv_quote(lnames[(*ds.y_clean)[i]], delimiter);
    if (ds.is_ood) out += delimiter + std::string((*ds.is_ood)[i] ? "1" : "0");
    out += '\n';
  }
  return out;
}

}  // namespace hetsngp

#endif  // HETSNGP_DATA_HPP_
