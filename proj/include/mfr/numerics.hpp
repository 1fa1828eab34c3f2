// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major matrices, seeded random streams, AdamW and small
// statistics helpers. All training math runs in double precision.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mfr {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Row-major literal, e.g. Matrix{{1, 2}, {3, 4}}. Rows must be equal length.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  Matrix transposed() const;
  bool all_finite() const noexcept;
  void fill(double v) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a·b. Each output entry is accumulated over the inner index in increasing
/// order, independent of blocking, so results are bit-reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a·bᵀ with the same accumulation order as matmul(a, b.transposed()).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Frobenius norm of a − b.
double frobenius_distance(const Matrix& a, const Matrix& b);

/// Mixes two 64-bit words into one; used to derive seeds and stream ids.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

/// Deterministic random stream keyed by (seed, stream-id).
///
/// Backed by std::mt19937_64 seeded through std::seed_seq; both are fully
/// specified by the standard so sequences are identical on every platform.
/// Normals use the Marsaglia polar transform on 53-bit uniforms (the second
/// value of each accepted pair is cached and returned next).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  /// Number of 64-bit words drawn from the engine so far.
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n). Rejection sampled, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  double gaussian();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::vector<double> sample_gaussian(RngStream& rng, std::size_t n);

struct AdamWHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Moment estimates for one parameter tensor. Vectors are stored as 1×n.
struct AdamWState {
  Matrix m;
  Matrix v;
  std::uint64_t step = 0;
  AdamWHyper hyper;

  AdamWState() = default;
  AdamWState(std::size_t rows, std::size_t cols, AdamWHyper h)
      : m(rows, cols), v(rows, cols), hyper(h) {}

  void reset() noexcept {
    m.fill(0.0);
    v.fill(0.0);
    step = 0;
  }
};

/// One decoupled-weight-decay Adam step:
///   p ← p·(1 − lr·wd);  p ← p − lr · m̂ / (√v̂ + ε)
/// Throws NumericError on non-finite gradient entries, DimensionError on
/// shape mismatch.
void adamw_step(Matrix& param, const Matrix& grad, AdamWState& state);

double mean(std::span<const double> xs);
double variance(std::span<const double> xs);  // population variance
double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace mfr
