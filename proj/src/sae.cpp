// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/sae.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "mfr/errors.hpp"

namespace mfr {

void SaeParams::validate() const {
  if (W.rows() == 0 || W.cols() == 0) throw ConfigError("SAE weights are empty");
  if (b.size() != W.rows()) throw DimensionError("SAE bias length differs from hidden size");
  if (k < 1 || k > W.rows()) {
    std::ostringstream os;
    os << "k=" << k << " must lie in [1, " << W.rows() << "]";
    throw ConfigError(os.str());
  }
}

SaeParams init_sae(std::size_t hidden, std::size_t d, std::size_t k, RngStream& rng) {
  if (hidden == 0 || d == 0) throw ConfigError("SAE dimensions must be positive");
  if (k < 1 || k > hidden) throw ConfigError("k must lie in [1, hidden]");
  SaeParams p{Matrix(hidden, d), std::vector<double>(hidden, 0.0), k};
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& w : p.W.values()) w = rng.uniform(-bound, bound);
  return p;
}

void topk_indices(std::span<const double> v, std::size_t k, std::vector<double>& scratch,
                  std::vector<std::size_t>& out) {
  if (k > v.size()) {
    std::ostringstream os;
    os << "topk: k=" << k << " exceeds vector length " << v.size();
    throw ConfigError(os.str());
  }
  out.clear();
  if (k == 0) return;
  // kth largest value, then everything above it plus the lowest-index ties
  scratch.assign(v.begin(), v.end());
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   scratch.end(), std::greater<>());
  const double tau = scratch[k - 1];
  std::size_t above = 0;
  for (double x : v) above += x > tau;
  std::size_t ties = k - above;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > tau) {
      out.push_back(i);
    } else if (v[i] == tau && ties > 0) {
      out.push_back(i);
      --ties;
    }
  }
}

TopK topk(std::span<const double> v, std::size_t k) {
  for (double x : v)
    if (std::isnan(x)) throw NumericError("topk: NaN entry");
  TopK r;
  std::vector<double> scratch;
  topk_indices(v, k, scratch, r.indices);
  r.values.assign(v.size(), 0.0);
  for (std::size_t i : r.indices) r.values[i] = v[i];
  return r;
}

Matrix ForwardTrace::hidden_dense() const {
  Matrix h(pre.rows(), pre.cols());
  for (std::size_t s = 0; s < samples(); ++s) {
    auto idx = active_of(s);
    auto val = values_of(s);
    for (std::size_t t = 0; t < k; ++t) h(s, idx[t]) = val[t];
  }
  return h;
}

ForwardTrace forward(const SaeParams& p, const Matrix& X) {
  p.validate();
  if (X.cols() != p.input_dim()) {
    std::ostringstream os;
    os << "forward: input has " << X.cols() << " columns, SAE expects " << p.input_dim();
    throw DimensionError(os.str());
  }
  if (!X.all_finite()) throw NumericError("forward: non-finite input");
  const std::size_t n = X.rows(), h = p.hidden(), d = p.input_dim(), k = p.k;

  ForwardTrace tr;
  tr.k = k;
  tr.pre = matmul_transposed(X, p.W);
  for (std::size_t s = 0; s < n; ++s) {
    auto row = tr.pre.row(s);
    for (std::size_t i = 0; i < h; ++i) row[i] += p.b[i];
  }
  if (!tr.pre.all_finite()) throw NumericError("forward: non-finite pre-activations");

  tr.active.resize(n * k);
  tr.active_value.resize(n * k);
  tr.reconstruction = Matrix(n, d);
  std::vector<double> scratch;
  std::vector<std::size_t> sel;
  for (std::size_t s = 0; s < n; ++s) {
    auto row = tr.pre.row(s);
    topk_indices(row, k, scratch, sel);
    auto xhat = tr.reconstruction.row(s);
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t i = sel[t];
      tr.active[s * k + t] = i;
      tr.active_value[s * k + t] = row[i];
      axpy(row[i], p.W.row(i), xhat);
    }
  }
  return tr;
}

double reconstruction_loss(const Matrix& X, const Matrix& Xhat) {
  if (X.rows() != Xhat.rows() || X.cols() != Xhat.cols())
    throw DimensionError("reconstruction_loss: shape mismatch");
  if (X.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < X.rows(); ++s) {
    auto x = X.row(s);
    auto y = Xhat.row(s);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - x[i];
      sq += e * e;
    }
    total += sq;
  }
  return total / static_cast<double>(X.rows());
}

SaeGradients backward(const SaeParams& p, const ForwardTrace& trace, const Matrix& X) {
  const std::size_t n = X.rows(), d = p.input_dim(), k = trace.k;
  SaeGradients g{Matrix(p.hidden(), d), std::vector<double>(p.hidden(), 0.0)};
  if (n == 0) return g;
  const double scale = 2.0 / static_cast<double>(n);
  std::vector<double> resid(d);
  for (std::size_t s = 0; s < n; ++s) {
    auto x = X.row(s);
    auto xhat = trace.reconstruction.row(s);
    for (std::size_t i = 0; i < d; ++i) resid[i] = scale * (xhat[i] - x[i]);
    auto idx = trace.active_of(s);
    auto val = trace.values_of(s);
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t unit = idx[t];
      // dL/dz for this unit, through the decoder row it scales
      const double dz = dot(p.W.row(unit), resid);
      auto gw = g.dW.row(unit);
      axpy(val[t], resid, gw);  // decoder use of W
      axpy(dz, x, gw);          // encoder use of W
      g.db[unit] += dz;
    }
  }
  return g;
}

double topk_margin(const ForwardTrace& trace) {
  const std::size_t h = trace.pre.cols(), k = trace.k;
  if (k >= h) return std::numeric_limits<double>::infinity();
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < trace.samples(); ++s) {
    auto row = trace.pre.row(s);
    auto idx = trace.active_of(s);
    double kth = std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) kth = std::min(kth, row[i]);
    double next = -std::numeric_limits<double>::infinity();
    std::size_t t = 0;
    for (std::size_t i = 0; i < h; ++i) {
      if (t < idx.size() && idx[t] == i) {
        ++t;
        continue;
      }
      next = std::max(next, row[i]);
    }
    margin = std::min(margin, kth - next);
  }
  return margin;
}

}  // namespace mfr
