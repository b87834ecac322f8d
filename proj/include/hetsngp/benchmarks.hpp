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

// Synthetic benchmark drivers: the label-noise comparison on noisy concentric
// circles and the out-of-distribution panels on the Gaussian mixture and two
// moons. Each driver trains every variant from one base configuration.

#ifndef HETSNGP_BENCHMARKS_HPP_
#define HETSNGP_BENCHMARKS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "hetsngp/data.hpp"
#include "hetsngp/metrics.hpp"
#include "hetsngp/model.hpp"
#include "hetsngp/run_config.hpp"

namespace hetsngp {

inline constexpr std::array<VariantKind, 4> kAllVariants = {
    VariantKind::kDeterministic, VariantKind::kSngp, VariantKind::kHeteroscedastic,
    VariantKind::kHetSngp};

inline std::string variant_name(VariantKind v) {
  return detail::enum_name(v, detail::kVariantNames);
}

// Worker count from HETSNGP_THREADS (default 1).
inline int worker_threads() {
  const char* env = std::getenv("HETSNGP_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

// Runs task(i) for i in [0, count) on up to `threads` workers. Tasks must be
// independent; results are written by index so the outcome does not depend
// on scheduling.
inline void parallel_for(int count, int threads, const std::function<void(int)>& task) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Standard error of the mean; 0 for fewer than two values.
inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// ---------------------------------------------------------------------------
// Label-noise benchmark

// Defaults for the circles comparison: 100 points per ring, standardized
// inputs, 500 epochs of SGD at learning rate 0.2, noise head init scale 3.
inline RunConfig default_circles_bench_config() {
  RunConfig rc;
  rc.dataset.generator = "noisy_circles";
  rc.dataset.seed = 100;
  rc.output_dir = "out/bench";
  rc.model.train.epochs = 500;
  rc.model.train.learning_rate = 0.2;
  rc.model.het.init_scale = 3.0;
  return rc;
}

struct CirclesBenchOptions {
  int seed_count = 5;
  int test_per_class = 1000;
  std::uint64_t test_seed_offset = 10000;
};

struct BenchRow {
  VariantKind variant = VariantKind::kDeterministic;
  std::vector<double> accuracies;  // clean-label test accuracy per seed
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Trains every variant on seed_count independent noisy-circles draws and
// scores each against the clean labels of a large fresh test draw. Seed s
// uses dataset seed base+s, test seed base+offset+s and model seed run+s.
inline std::vector<BenchRow> run_circles_benchmark(const RunConfig& base,
                                                   const CirclesBenchOptions& opts,
                                                   int threads = 1) {
  require(opts.seed_count >= 1, ErrorCode::kInvalidConfig, "seed_count must be >= 1");
  require(base.dataset.generator == "noisy_circles", ErrorCode::kInvalidConfig,
          "the label-noise benchmark needs the noisy_circles generator");
  const int seeds = opts.seed_count;
  std::vector<BenchRow> rows(kAllVariants.size());
  for (std::size_t v = 0; v < kAllVariants.size(); ++v) {
    rows[v].variant = kAllVariants[v];
    rows[v].accuracies.assign(seeds, 0.0);
  }
  parallel_for(static_cast<int>(kAllVariants.size()) * seeds, threads, [&](int job) {
    const int v = job / seeds;
    const int s = job % seeds;
    Dataset train = noisy_concentric_circles(base.dataset.circles, base.dataset.seed + s);
    CirclesParams tp = base.dataset.circles;
    tp.n_per_class = opts.test_per_class;
    Dataset test =
        noisy_concentric_circles(tp, base.dataset.seed + opts.test_seed_offset + s);
    if (base.dataset.standardize) {
      StandardizedSplit st = standardize_fit_transform(std::move(train), std::move(test));
      train = std::move(st.train);
      test = std::move(st.test);
    }
    ModelConfig mc = base.model;
    mc.train.seed = base.seed + static_cast<std::uint64_t>(s);
    HetSngpModel model = build_variant(kAllVariants[v], {2, 3}, mc);
    fit(model, train, mc.train);
    Matrix probs = model.predict_proba(test.x, Rng(mc.train.seed).split(streams::kPredict));
    rows[v].accuracies[s] = accuracy(probs, *test.y_clean);
  });
  for (BenchRow& r : rows) {
    r.mean = mean_of(r.accuracies);
    r.stderr_ = stderr_of(r.accuracies);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// OOD panels

// Gaussian mixture with its far OOD cluster; 30% of the in-distribution rows
// are held out for scoring together with every OOD row.
inline RunConfig default_mixture_panel_config() {
  RunConfig rc;
  rc.dataset.generator = "gaussian_mixture";
  rc.dataset.seed = 1;
  rc.dataset.test_fraction = 0.3;
  rc.dataset.split_seed = 2;
  rc.output_dir = "out/ood";
  rc.model.train.learning_rate = 0.2;
  return rc;
}

struct OodRow {
  VariantKind variant = VariantKind::kDeterministic;
  double auroc = 0.0;
  double fpr_at_95 = 0.0;
  double mean_id_max_prob = 0.0;
  double mean_ood_max_prob = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

inline OodRow score_ood(VariantKind variant, const Matrix& probs,
                        const std::vector<std::uint8_t>& is_ood) {
  OodRow row;
  row.variant = variant;
  Vector unc = uncertainty_from_probs(probs);
  Vector conf = probs.rowwise().maxCoeff();
  OodReport rep = evaluate_ood(std::span<const double>(unc.data(), static_cast<std::size_t>(unc.size())),
                               std::span<const double>(conf.data(), static_cast<std::size_t>(conf.size())),
                               is_ood);
  row.auroc = rep.auroc;
  row.fpr_at_95 = rep.fpr_at_95;
  row.n_id = rep.n_id;
  row.n_ood = rep.n_ood;
  double id_sum = 0.0, ood_sum = 0.0;
  for (std::size_t i = 0; i < is_ood.size(); ++i) {
    (is_ood[i] ? ood_sum : id_sum) += conf[static_cast<Eigen::Index>(i)];
  }
  row.mean_id_max_prob = row.n_id ? id_sum / static_cast<double>(row.n_id) : 0.0;
  row.mean_ood_max_prob = row.n_ood ? ood_sum / static_cast<double>(row.n_ood) : 0.0;
  return row;
}

// Trains every variant on the training split and scores the held-out
// in-distribution rows against the OOD cluster with 1 - max probability.
inline std::vector<OodRow> run_mixture_panel(const RunConfig& base, int threads = 1) {
  require(base.dataset.generator == "gaussian_mixture", ErrorCode::kInvalidConfig,
          "the OOD panel needs the gaussian_mixture generator");
  LoadedData data = load_dataset(base.dataset);
  Dataset train = data.train;
  Dataset test = data.test;
  if (base.dataset.standardize) {
    StandardizedSplit st = standardize_fit_transform(std::move(train), std::move(test));
    train = std::move(st.train);
    test = std::move(st.test);
  }
  require(test.is_ood.has_value(), ErrorCode::kInvalidConfig, "OOD panel needs OOD rows");
  std::vector<OodRow> rows(kAllVariants.size());
  parallel_for(static_cast<int>(kAllVariants.size()), threads, [&](int v) {
    HetSngpModel model =
        build_variant(kAllVariants[v], {train.dim(), train.num_classes}, base.model);
    fit(model, train, base.model.train);
    Matrix probs = model.predict_proba(test.x, Rng(base.seed).split(streams::kPredict));
    rows[v] = score_ood(kAllVariants[v], probs, *test.is_ood);
  });
  return rows;
}

// Two moons, scored on a far-field band of a regular grid.
inline RunConfig default_moons_panel_config() {
  RunConfig rc;
  rc.dataset.generator = "two_moons";
  rc.dataset.seed = 3;
  rc.output_dir = "out/moons";
  rc.model.train.epochs = 100;
  rc.model.train.learning_rate = 0.2;
  return rc;
}

struct GridSpec {
  double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;
  int resolution = 3;
};

// Row-major grid with y in the outer loop; coordinates min + (max-min) i/(r-1).
inline Matrix grid_points(const GridSpec& g) {
  require(g.resolution >= 1, ErrorCode::kInvalidConfig, "grid resolution must be >= 1");
  require(g.xmin <= g.xmax && g.ymin <= g.ymax, ErrorCode::kInvalidConfig,
          "grid bounds must satisfy min <= max");
  const int r = g.resolution;
  auto coord = [r](double lo, double hi, int i) {
    return r == 1 ? lo : (i == r - 1 ? hi : lo + (hi - lo) * i / (r - 1));
  };
  Matrix pts(static_cast<Eigen::Index>(r) * r, 2);
  for (int iy = 0; iy < r; ++iy) {
    for (int ix = 0; ix < r; ++ix) {
      pts(iy * r + ix, 0) = coord(g.xmin, g.xmax, ix);
      pts(iy * r + ix, 1) = coord(g.ymin, g.ymax, iy);
    }
  }
  return pts;
}

struct BandRow {
  VariantKind variant = VariantKind::kDeterministic;
  double mean_max_prob = 0.0;
  double frac_confident = 0.0;  // share of band points with max prob >= 0.9
  std::size_t band_points = 0;
};

struct FarBand {
  GridSpec grid{-8.0, 9.0, -8.0, 8.5, 61};
  double min_distance = 3.0;  // from every training point, raw input units
};

// Grid points at least `min_distance` from all training inputs.
inline Matrix far_band_points(const Matrix& train_x, const FarBand& band) {
  Matrix pts = grid_points(band.grid);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double best = (train_x.rowwise() - pts.row(i)).rowwise().squaredNorm().minCoeff();
    if (std::sqrt(best) >= band.min_distance) keep.push_back(i);
  }
  Matrix out(static_cast<Eigen::Index>(keep.size()), 2);
  for (std::size_t k = 0; k < keep.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = pts.row(keep[k]);
  return out;
}

inline std::vector<BandRow> run_moons_panel(const RunConfig& base, const FarBand& band = {},
                                            int threads = 1) {
  require(base.dataset.generator == "two_moons", ErrorCode::kInvalidConfig,
          "the far-field panel needs the two_moons generator");
  LoadedData data = load_dataset(base.dataset);
  Dataset train = data.train;
  Standardizer st = base.dataset.standardize ? Standardizer::fit(train.x)
                                             : Standardizer::identity(train.dim());
  const Matrix band_raw = far_band_points(train.x, band);
  const Matrix band_x = st.transform(band_raw);
  train.x = st.transform(train.x);
  std::vector<BandRow> rows(kAllVariants.size());
  parallel_for(static_cast<int>(kAllVariants.size()), threads, [&](int v) {
    HetSngpModel model = build_variant(kAllVariants[v], {2, 2}, base.model);
    fit(model, train, base.model.train);
    Matrix probs = model.predict_proba(band_x, Rng(base.seed).split(streams::kPredict));
    Vector conf = probs.rowwise().maxCoeff();
    BandRow row;
    row.variant = kAllVariants[v];
    row.band_points = static_cast<std::size_t>(conf.size());
    row.mean_max_prob = conf.size() ? conf.mean() : 0.0;
    row.frac_confident =
        conf.size() ? static_cast<double>((conf.array() >= 0.9).count()) / conf.size() : 0.0;
    rows[v] = row;
  });
  return rows;
}

}  // namespace hetsngp

#endif  // HETSNGP_BENCHMARKS_HPP_
