// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfr/errors.hpp"

namespace mfr {

double Assignment::total() const {
  double s = 0.0;
  for (const auto& p : pairs) s += p.similarity;
  return s;
}

Matrix normalize_rows(const Matrix& a) {
  Matrix out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double n = norm2(row);
    if (n == 0.0) continue;
    for (double& x : row) x /= n;
  }
  return out;
}

SimilarityTable cosine_table(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    std::ostringstream os;
    os << "cosine_table: feature dimension " << a.cols() << " vs " << b.cols();
    throw DimensionError(os.str());
  }
  Matrix t = matmul_transposed(normalize_rows(a), normalize_rows(b));
  for (double& x : t.values()) x = std::clamp(x, -1.0, 1.0);
  return t;
}

std::vector<BestMatch> row_maxima(const Matrix& table) {
  std::vector<BestMatch> out(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto row = table.row(r);
    if (row.empty()) continue;
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = {best, row[best]};
  }
  return out;
}

std::vector<BestMatch> max_cosine_pairs(const Matrix& a, const Matrix& b) {
  return row_maxima(cosine_table(a, b));
}

namespace {

// Square minimum-cost assignment. Returns row → column.
std::vector<std::size_t> solve_min_cost(const Matrix& cost, std::vector<double>& u,
                                        std::vector<double>& v) {
  const std::size_t n = cost.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual source
  u.assign(n + 1, 0.0);
  v.assign(n + 1, 0.0);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  std::vector<double> minv(n + 1);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[owner[j] - 1] = j - 1;
  return row_to_col;
}

// Moves an optimal assignment to the lexicographically smallest optimal one.
// Every perfect matching inside the tight subgraph of an optimal dual is
// optimal, so rows are fixed in order to the smallest column that still
// admits an alternating path back to the row's current column.
class LexRefiner {
 public:
  LexRefiner(const Matrix& value, const Matrix& cost, const std::vector<double>& u,
             const std::vector<double>& v, std::vector<std::size_t>& rc)
      : value_(value), rc_(rc), cr_(rc.size()), tight_(rc.size()) {
    const std::size_t n = rc.size();
    double scale = 1.0;
    for (double c : cost.values()) scale = std::max(scale, std::abs(c));
    const double tol = 1e-10 * scale;
    for (std::size_t i = 0; i < n; ++i) {
      cr_[rc[i]] = i;
      for (std::size_t j = 0; j < n; ++j)
        if (cost(i, j) - u[i + 1] - v[j + 1] <= tol) tight_[i].push_back(j);
    }
  }

  void run() {
    const std::size_t n = rc_.size();
    fixed_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c : tight_[i]) {
        if (c >= rc_[i]) break;
        const std::size_t r = cr_[c];
        if (fixed_[r]) continue;
        if (try_move(i, c)) break;
      }
      fixed_[i] = 1;
    }
  }

 private:
  bool try_move(std::size_t i, std::size_t c) {
    const std::size_t n = rc_.size();
    target_ = rc_[i];
    blocked_col_ = c;
    mover_ = i;
    seen_.assign(n, 0);
    path_.clear();
    if (!dfs(cr_[c])) return false;
    // path_ holds (row, new column) pairs; check the exchange does not lose value
    double before = value_(i, rc_[i]), after = value_(i, c);
    for (auto [r, col] : path_) {
      before += value_(r, rc_[r]);
      after += value_(r, col);
    }
    if (after < before) return false;
    for (auto [r, col] : path_) {
      rc_[r] = col;
      cr_[col] = r;
    }
    rc_[i] = c;
    cr_[c] = i;
    return true;
  }

  bool dfs(std::size_t r) {
    for (std::size_t x : tight_[r]) {
      if (x == blocked_col_ || seen_[x]) continue;
      const std::size_t owner = cr_[x];
      if (x != target_ && (fixed_[owner] || owner == mover_)) continue;
      seen_[x] = 1;
      if (x == target_ || dfs(owner)) {
        path_.emplace_back(r, x);
        return true;
      }
    }
    return false;
  }

  const Matrix& value_;
  std::vector<std::size_t>& rc_;
  std::vector<std::size_t> cr_;
  std::vector<std::vector<std::size_t>> tight_;
  std::vector<char> fixed_, seen_;
  std::vector<std::pair<std::size_t, std::size_t>> path_;
  std::size_t target_ = 0, blocked_col_ = 0, mover_ = 0;
};

}  // namespace

Assignment hungarian(const SimilarityTable& table) {
  Assignment out;
  const std::size_t rows = table.rows(), cols = table.cols();
  if (rows == 0 || cols == 0) return out;
  if (!table.all_finite()) throw NumericError("hungarian: non-finite similarity");
  // Pad to square with zero-valued dummies; they never change relative totals.
  const std::size_t n = std::max(rows, cols);
  Matrix value(n, n, 0.0), cost(n, n, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      value(i, j) = table(i, j);
      cost(i, j) = -table(i, j);
    }
  std::vector<double> u, v;
  auto rc = solve_min_cost(cost, u, v);
  LexRefiner(value, cost, u, v, rc).run();
  for (std::size_t i = 0; i < rows; ++i)
    if (rc[i] < cols) out.pairs.push_back({i, rc[i], table(i, rc[i])});
  return out;
}

double mmcs(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return 0.0;
  const auto best = max_cosine_pairs(a, b);
  double s = 0.0;
  for (const auto& m : best) s += m.similarity;
  return s / static_cast<double>(best.size());
}

double mmcs_symmetric(const Matrix& a, const Matrix& b) {
  return 0.5 * (mmcs(a, b) + mmcs(b, a));
}

}  // namespace mfr
