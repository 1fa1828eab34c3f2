// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>

#include "mfr/errors.hpp"

namespace mfr {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

namespace {

constexpr std::size_t kRowBlock = 8;
constexpr std::size_t kColTile = 16;
constexpr std::size_t kPanel = 512;

// Native SIMD width; element-wise vector arithmetic matches the scalar order.
#if defined(__AVX512F__)
constexpr std::size_t kLanes = 8;
#elif defined(__AVX__)
constexpr std::size_t kLanes = 4;
#else
constexpr std::size_t kLanes = 2;
#endif
typedef double vec __attribute__((vector_size(kLanes * sizeof(double))));

inline vec load(const double* p) {
  vec v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void store(double* p, vec v) { std::memcpy(p, &v, sizeof v); }

// C[i.., j..] (R x T) = A[i.., :] · B[:, j..]. Each accumulator runs over the
// inner index in increasing order.
template <std::size_t R, std::size_t T>
inline void kernel(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                   std::size_t inner, double* c, std::size_t ldc) {
  constexpr std::size_t V = T / kLanes;
  vec acc[R][V] = {};
  for (std::size_t p = 0; p < inner; ++p) {
    const double* brow = b + p * ldb;
    vec bv[V];
    for (std::size_t v = 0; v < V; ++v) bv[v] = load(brow + v * kLanes);
    for (std::size_t r = 0; r < R; ++r) {
      const vec av = vec{} + a[r * lda + p];
      for (std::size_t v = 0; v < V; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < V; ++v) store(c + r * ldc + v * kLanes, acc[r][v]);
}

// Scalar edge path with the same per-entry accumulation order.
void edge(const double* a, std::size_t lda, const double* b, std::size_t ldb, std::size_t inner,
          double* c, std::size_t ldc, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < cols; ++t) {
      double s = 0.0;
      for (std::size_t p = 0; p < inner; ++p) s += a[r * lda + p] * b[p * ldb + t];
      c[r * ldc + t] = s;
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: (" << a.rows() << "x" << a.cols() << ") x (" << b.rows() << "x" << b.cols()
       << ")";
    throw DimensionError(os.str());
  }
  const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
  Matrix c(n, m);
  const std::size_t n_full = n - n % kRowBlock;
  const std::size_t m_full = m - m % kColTile;
  // Column panels keep a slice of B cache-resident while A streams past it.
  for (std::size_t j0 = 0; j0 < m_full; j0 += kPanel) {
    const std::size_t j1 = std::min(m_full, j0 + kPanel);
    for (std::size_t i = 0; i < n_full; i += kRowBlock)
      for (std::size_t j = j0; j < j1; j += kColTile)
        kernel<kRowBlock, kColTile>(a.data() + i * inner, inner, b.data() + j, m, inner,
                                    c.data() + i * m + j, m);
  }
  if (m_full < m)
    edge(a.data(), inner, b.data() + m_full, m, inner, c.data() + m_full, m, n_full, m - m_full);
  if (n_full < n)
    edge(a.data() + n_full * inner, inner, b.data(), m, inner, c.data() + n_full * m, m,
         n - n_full, m);
  return c;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) { return matmul(a, b.transposed()); }

// Eight interleaved partial sums combined pairwise: a fixed order that does
// not depend on the target's vector width.
double dot(std::span<const double> a, std::span<const double> b) {
  typedef double v8 __attribute__((vector_size(8 * sizeof(double))));
  const std::size_t n = a.size(), full = n - n % 8;
  v8 acc = {};
  for (std::size_t i = 0; i < full; i += 8) {
    v8 x, y;
    std::memcpy(&x, a.data() + i, sizeof x);
    std::memcpy(&y, b.data() + i, sizeof y);
    acc += x * y;
  }
  double s = ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
  for (std::size_t i = full; i < n; ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frobenius_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("frobenius_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  // splitmix64 finalizer over a Weyl combination
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {
std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}
}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return engine_();
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("RngStream::below: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::vector<double> sample_gaussian(RngStream& rng, std::size_t n) {
  std::vector<double> out(n);
  for (auto& x : out) x = rng.gaussian();
  return out;
}

void adamw_step(Matrix& param, const Matrix& grad, AdamWState& state) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols() ||
      state.m.rows() != param.rows() || state.m.cols() != param.cols() ||
      state.v.rows() != param.rows() || state.v.cols() != param.cols())
    throw DimensionError("adamw_step: parameter, gradient and moment shapes differ");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad.values()[i])) {
      std::ostringstream os;
      os << "non-finite gradient entry " << i << " (row " << i / grad.cols() << ", col "
         << i % grad.cols() << ")";
      throw NumericError(os.str());
    }
  }
  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  const double decay = 1.0 - h.learning_rate * h.weight_decay;
  auto p = param.values();
  auto g = grad.values();
  auto m = state.m.values();
  auto v = state.v.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] *= decay;
    p[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.eps);
  }
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double mu = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return s / static_cast<double>(xs.size());
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("pearson: sequences differ in length");
  if (xs.size() < 2) throw CorrelationError("pearson: need at least two points");
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw CorrelationError("pearson: zero variance, r undefined");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace mfr
