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

// Dense linear-algebra and random-number substrate.
//
// Matrices are row-major Eigen matrices of doubles. Every random draw in the
// library goes through Rng, a counter-based generator: the i-th output of a
// stream is a pure function of (key, i), and child streams are derived with
// split() so parallel work can partition randomness deterministically.

#ifndef HETSNGP_LINALG_HPP_
#define HETSNGP_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "hetsngp/errors.hpp"

namespace hetsngp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                          const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorCode::kDimensionMismatch,
         what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
             ", got " + shape_string(m));
  }
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

// ---------------------------------------------------------------------------
// Rng

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x9E3779B97F4A7C15ULL)) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    double v = lo + (hi - lo) * uniform();
    return v < hi ? v : std::nextafter(hi, lo);
  }

  // Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Independent child stream; does not advance this stream.
  Rng split(std::uint64_t stream_id) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(stream_id + 0xD1B54A32D192ED03ULL));
    return child;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Matrix sample_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  require(rows >= 1 && cols >= 1, ErrorCode::kDimensionMismatch,
          "sample_gaussian: rows and cols must be >= 1");
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  return out;
}

inline Matrix sample_uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                             double hi) {
  require(rows >= 1 && cols >= 1, ErrorCode::kDimensionMismatch,
          "sample_uniform: rows and cols must be >= 1");
  require(lo < hi, ErrorCode::kInvalidConfig, "sample_uniform: lo must be < hi");
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.uniform(lo, hi);
  return out;
}

inline Vector sample_gaussian_vector(Rng& rng, Eigen::Index n) {
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.normal();
  return out;
}

// ---------------------------------------------------------------------------
// Cholesky with jitter escalation

struct CholeskyFactor {
  Matrix lower;
  double jitter = 0.0;  // diagonal shift that was actually applied
};

inline constexpr double kMinJitter = 1e-10;
inline constexpr double kMaxJitter = 1e-4;

inline CholeskyFactor cholesky(const Matrix& a, double jitter = 0.0) {
  if (a.rows() != a.cols()) {
    fail(ErrorCode::kDimensionMismatch, "cholesky: matrix is " + shape_string(a));
  }
  require(jitter >= 0.0, ErrorCode::kInvalidConfig, "cholesky: jitter must be >= 0");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (!a.allFinite() || (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    fail(ErrorCode::kNotPositiveDefinite, "cholesky: matrix is not finite and symmetric");
  }
  const Eigen::Index n = a.rows();
  double current = jitter;
  for (;;) {
    Matrix shifted = a;
    shifted.diagonal().array() += current;
    Eigen::LLT<Matrix, Eigen::Lower> llt(shifted);
    if (llt.info() == Eigen::Success) {
      CholeskyFactor out;
      out.lower = llt.matrixLLT().triangularView<Eigen::Lower>();
      if (out.lower.allFinite()) {
        out.jitter = current;
        return out;
      }
    }
    if (current >= kMaxJitter) break;
    current = current <= 0.0 ? kMinJitter : std::min(current * 10.0, kMaxJitter);
  }
  fail(ErrorCode::kNotPositiveDefinite,
       "cholesky: factorization of " + std::to_string(n) + "x" + std::to_string(n) +
           " matrix failed at jitter " + std::to_string(kMaxJitter));
}

// ---------------------------------------------------------------------------
// Power-iteration spectral norm

struct SpectralEstimate {
  double sigma = 0.0;
  Vector u;  // left singular vector estimate, reused to warm-start the next call
};

inline SpectralEstimate spectral_norm(const Matrix& w, int iters, const Vector& u_state) {
  require(iters >= 1, ErrorCode::kInvalidConfig, "spectral_norm: iters must be >= 1");
  if (u_state.size() != w.rows()) {
    fail(ErrorCode::kDimensionMismatch,
         "spectral_norm: u_state has length " + std::to_string(u_state.size()) +
             " but matrix is " + shape_string(w));
  }
  Vector u = u_state;
  double norm = u.norm();
  if (!(norm > 0.0)) {
    u = Vector::Ones(w.rows());
    norm = u.norm();
  }
  u /= norm;
  Vector v(w.cols());
  for (int it = 0; it < iters; ++it) {
    v.noalias() = w.transpose() * u;
    double vn = v.norm();
    if (vn == 0.0) return {0.0, u};
    v /= vn;
    u.noalias() = w * v;
    double un = u.norm();
    if (un == 0.0) return {0.0, Vector::Ones(w.rows()).normalized()};
    u /= un;
  }
  double sigma = u.dot(w * v);
  return {std::abs(sigma), u};
}

// ---------------------------------------------------------------------------
// Vectorizable sine and cosine
//
// Cody-Waite reduction by pi/2 followed by the fdlibm minimax kernels on
// [-pi/4, pi/4]. Written branch-free so the loop auto-vectorizes. Absolute
// error stays within a few ulp for |x| < 2^20, which covers random-feature
// arguments by many orders of magnitude.

namespace detail {

inline void sincos_kernel(double x, double& s_out, double& c_out) {
  constexpr double kInvPio2 = 6.36619772367581382433e-01;
  constexpr double kPio2Hi = 1.57079632673412561417e+00;  // first 33 bits of pi/2
  constexpr double kPio2Lo = 6.07710050650619224932e-11;  // pi/2 - kPio2Hi
  constexpr double kRound = 0x1.8p52;
  constexpr double S1 = -1.66666666666666324348e-01, S2 = 8.33333333332248946124e-03,
                   S3 = -1.98412698298579493134e-04, S4 = 2.75573137070700676789e-06,
                   S5 = -2.50507602534068634195e-08, S6 = 1.58969099521155010221e-10;
  constexpr double C1 = 4.16666666666666019037e-02, C2 = -1.38888888888741095749e-03,
                   C3 = 2.48015872894767294178e-05, C4 = -2.75573143513906633035e-07,
                   C5 = 2.08757232129817482790e-09, C6 = -1.13596475577881948265e-11;
  const double shifted = x * kInvPio2 + kRound;
  const double fn = shifted - kRound;
  const auto quadrant = static_cast<std::int64_t>(fn) & 3;
  const double r = (x - fn * kPio2Hi) - fn * kPio2Lo;
  const double z = r * r;
  const double sin_r = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
  const double cos_r =
      1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
  const bool odd = (quadrant & 1) != 0;
  const double s = odd ? cos_r : sin_r;
  const double c = odd ? sin_r : cos_r;
  s_out = (quadrant & 2) != 0 ? -s : s;
  c_out = ((quadrant + 1) & 2) != 0 ? -c : c;
}

}  // namespace detail

// Elementwise cos and sin of `x` into the two outputs (resized as needed).
inline void cos_sin(const Matrix& x, Matrix& cos_out, Matrix& sin_out) {
  cos_out.resize(x.rows(), x.cols());
  sin_out.resize(x.rows(), x.cols());
  const double* in = x.data();
  double* c = cos_out.data();
  double* s = sin_out.data();
  const Eigen::Index n = x.size();
  for (Eigen::Index i = 0; i < n; ++i) detail::sincos_kernel(in[i], s[i], c[i]);
}

inline Matrix fast_cos(const Matrix& x) {
  Matrix c, s;
  cos_sin(x, c, s);
  return c;
}

// ---------------------------------------------------------------------------
// Small numeric helpers shared by the model code

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Row-wise softmax of logits / temperature.
inline Matrix softmax_rows(const Matrix& logits, double temperature = 1.0) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    RowVector z = logits.row(i) / temperature;
    double mx = z.maxCoeff();
    RowVector e = (z.array() - mx).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

}  // namespace hetsngp

#endif  // HETSNGP_LINALG_HPP_
