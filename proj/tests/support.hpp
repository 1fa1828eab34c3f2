// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Test helpers and independent reference implementations. Nothing here calls
// into the library's math; the oracles are deliberately naive.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mfr/numerics.hpp"
#include "mfr/sae.hpp"

namespace mfr::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "mfr_test_XXXXXX").string();
    if (!mkdtemp(tmpl.data())) std::abort();
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = nd(gen);
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

// ---- oracles -------------------------------------------------------------------

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

/// TopK via a full sort on (value desc, index asc).
inline std::vector<double> sort_topk(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t t = 0; t < k; ++t) out[idx[t]] = v[idx[t]];
  return out;
}

/// Straight-line forward pass: z = Wx + b, keep top k, x̂ = Wᵀh.
inline Matrix naive_reconstruction(const Matrix& W, const std::vector<double>& b, std::size_t k,
                                   const Matrix& X) {
  const std::size_t h = W.rows(), d = W.cols();
  Matrix out(X.rows(), d);
  for (std::size_t s = 0; s < X.rows(); ++s) {
    std::vector<double> z(h);
    for (std::size_t i = 0; i < h; ++i) {
      double acc = b[i];
      for (std::size_t t = 0; t < d; ++t) acc += W(i, t) * X(s, t);
      z[i] = acc;
    }
    const auto hk = sort_topk(z, k);
    for (std::size_t t = 0; t < d; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < h; ++i) acc += W(i, t) * hk[i];
      out(s, t) = acc;
    }
  }
  return out;
}

inline double naive_loss(const Matrix& X, const Matrix& Xhat) {
  double total = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double e = X.values()[i] - Xhat.values()[i];
    total += e * e;
  }
  return total / static_cast<double>(X.rows());
}

inline double naive_cos(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

inline double naive_mmcs(const Matrix& A, const Matrix& B) {
  double total = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double best = -2.0;
    for (std::size_t j = 0; j < B.rows(); ++j) best = std::max(best, naive_cos(A.row(i), B.row(j)));
    total += best;
  }
  return total / static_cast<double>(A.rows());
}

/// α / C(N,2) · Σ_{i<j} (1 − MMCS(W_i, W_j)); symmetric variant averages
/// both directions.
inline double naive_penalty(const std::vector<Matrix>& W, double alpha, bool symmetric = false) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < W.size(); ++i)
    for (std::size_t j = i + 1; j < W.size(); ++j, ++pairs) {
      const double m = symmetric ? 0.5 * (naive_mmcs(W[i], W[j]) + naive_mmcs(W[j], W[i]))
                                 : naive_mmcs(W[i], W[j]);
      total += 1.0 - m;
    }
  return alpha * total / static_cast<double>(pairs);
}

/// Best total over all injective row→column maps (rows ≤ cols) by enumeration.
struct BruteAssignment {
  double total = -1e300;
  std::vector<std::size_t> cols;  // per row
};

inline BruteAssignment brute_force_assignment(const Matrix& t) {
  const bool flip = t.rows() > t.cols();
  const std::size_t n = flip ? t.cols() : t.rows(), m = flip ? t.rows() : t.cols();
  auto at = [&](std::size_t r, std::size_t c) { return flip ? t(c, r) : t(r, c); };
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  BruteAssignment best;
  do {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += at(r, perm[r]);
    if (s > best.total) {
      best.total = s;
      best.cols.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Exact probability that each item is among K draws taken one at a time
/// without replacement, each draw proportional to the remaining weights.
/// Enumerates every ordered K-tuple.
inline std::vector<double> exact_inclusion(const std::vector<double>& w, std::size_t K) {
  std::vector<double> incl(w.size(), 0.0);
  std::vector<std::size_t> chosen;
  std::vector<char> used(w.size(), 0);
  auto rec = [&](auto&& self, double prob, double remaining) -> void {
    if (chosen.size() == K) {
      for (std::size_t j : chosen) incl[j] += prob;
      return;
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (used[j]) continue;
      used[j] = 1;
      chosen.push_back(j);
      self(self, prob * w[j] / remaining, remaining - w[j]);
      chosen.pop_back();
      used[j] = 0;
    }
  };
  rec(rec, 1.0, std::accumulate(w.begin(), w.end(), 0.0));
  return incl;
}

/// Central finite difference of f at x[i].
template <class F>
double central_difference(F&& f, double& x, double step) {
  const double saved = x;
  x = saved + step;
  const double up = f();
  x = saved - step;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * step);
}

}  // namespace mfr::test
