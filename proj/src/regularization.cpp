// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/regularization.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "mfr/errors.hpp"
#include "mfr/matching.hpp"

namespace mfr {

void ActivationCounter::record(const ForwardTrace& trace) {
  if (trace.pre.cols() != counts_.size())
    throw DimensionError("ActivationCounter: trace hidden size differs from counter");
  for (std::size_t idx : trace.active) ++counts_[idx];
  samples_ += trace.samples();
}

void ActivationCounter::reset() noexcept {
  std::fill(counts_.begin(), counts_.end(), 0);
  samples_ = 0;
}

std::vector<double> ActivationCounter::frequencies() const {
  std::vector<double> f(counts_.size(), 0.0);
  if (samples_ == 0) return f;
  for (std::size_t i = 0; i < f.size(); ++i)
    f[i] = static_cast<double>(counts_[i]) / static_cast<double>(samples_);
  return f;
}

ActivationCounter ActivationCounter::from_counts(std::vector<std::uint64_t> counts,
                                                 std::uint64_t samples) {
  for (auto c : counts)
    if (c > samples) throw ConfigError("activation count exceeds samples seen");
  ActivationCounter ac;
  ac.counts_ = std::move(counts);
  ac.samples_ = samples;
  return ac;
}

double inactivity_metric(const ActivationCounter& counter, std::size_t k) {
  if (counter.samples_seen() == 0) throw EmptyWindowError("inactivity_metric: no samples seen");
  const std::size_t n = counter.hidden();
  if (n == 0 || k == 0 || k > n) throw ConfigError("inactivity_metric: k must lie in [1, hidden]");
  const double uniform = static_cast<double>(k) / static_cast<double>(n);
  const auto freq = counter.frequencies();
  double s = 0.0;
  for (double f : freq) s += std::abs(f - uniform) / uniform;
  return s / static_cast<double>(n);
}

void ReinitPolicy::validate() const {
  std::vector<std::string> problems;
  if (probe_steps < 1) problems.emplace_back("reinit.probe_steps must be >= 1");
  if (!(threshold > 0.0)) problems.emplace_back("reinit.threshold must be > 0");
  if (problems.empty()) return;
  std::string msg = "invalid reinit policy:";
  for (const auto& p : problems) msg += "\n  - " + p;
  throw ConfigError(msg);
}

ReinitDecision should_reinitialize(double metric, const ReinitPolicy& policy,
                                   std::size_t steps_since_init, std::size_t attempts) {
  if (!policy.enabled || steps_since_init != policy.probe_steps) return ReinitDecision::kKeep;
  if (!(metric >= policy.threshold)) return ReinitDecision::kKeep;
  if (attempts >= policy.max_attempts) return ReinitDecision::kExhausted;
  return ReinitDecision::kReinitialize;
}

SaeParams reinitialize(const SaeParams& p, RngStream& rng) {
  return init_sae(p.hidden(), p.input_dim(), p.k, rng);
}

namespace {

void require_pair(std::span<const Matrix> weights) {
  if (weights.size() < 2) throw ConfigError("MFR penalty needs at least two SAEs");
  for (const auto& w : weights)
    if (w.cols() != weights[0].cols())
      throw DimensionError("MFR penalty: dictionaries differ in input dimension");
}

double pair_count(std::size_t n) { return static_cast<double>(n) * (n - 1) / 2.0; }

}  // namespace

double raw_penalty(std::span<const Matrix> weights, PenaltyOptions opts) {
  require_pair(weights);
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i)
    for (std::size_t j = i + 1; j < weights.size(); ++j) {
      const double m = opts.symmetrize ? mmcs_symmetric(weights[i], weights[j])
                                       : mmcs(weights[i], weights[j]);
      s += 1.0 - m;
    }
  return s / pair_count(weights.size());
}

double mfr_penalty(std::span<const Matrix> weights, double alpha, PenaltyOptions opts) {
  return alpha * raw_penalty(weights, opts);
}

namespace {

// Adds `scale` · ∂(Σ_a cos(a, b*(a)))/∂· into ga and gb.
void accumulate_directional(const Matrix& a, const Matrix& b, double scale, Matrix& ga,
                            Matrix& gb) {
  const Matrix an = normalize_rows(a), bn = normalize_rows(b);
  Matrix table = matmul_transposed(an, bn);
  const auto best = row_maxima(table);
  const std::size_t d = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const std::size_t j = best[i].index;
    const double na = norm2(a.row(i)), nb = norm2(b.row(j));
    if (na == 0.0 || nb == 0.0) continue;
    const double c = table(i, j);
    auto ahat = an.row(i), bhat = bn.row(j);
    auto gai = ga.row(i), gbj = gb.row(j);
    for (std::size_t t = 0; t < d; ++t) {
      gai[t] += scale * (bhat[t] - c * ahat[t]) / na;
      gbj[t] += scale * (ahat[t] - c * bhat[t]) / nb;
    }
  }
}

}  // namespace

std::vector<Matrix> penalty_gradient(std::span<const Matrix> weights, double alpha,
                                     PenaltyOptions opts) {
  require_pair(weights);
  std::vector<Matrix> grads;
  grads.reserve(weights.size());
  for (const auto& w : weights) grads.emplace_back(w.rows(), w.cols());
  const double base = -alpha / pair_count(weights.size());
  for (std::size_t i = 0; i + 1 < weights.size(); ++i)
    for (std::size_t j = i + 1; j < weights.size(); ++j) {
      const auto& wi = weights[i];
      const auto& wj = weights[j];
      if (opts.symmetrize) {
        if (wi.rows() > 0)
          accumulate_directional(wi, wj, 0.5 * base / static_cast<double>(wi.rows()), grads[i],
                                 grads[j]);
        if (wj.rows() > 0)
          accumulate_directional(wj, wi, 0.5 * base / static_cast<double>(wj.rows()), grads[j],
                                 grads[i]);
      } else if (wi.rows() > 0) {
        accumulate_directional(wi, wj, base / static_cast<double>(wi.rows()), grads[i], grads[j]);
      }
    }
  return grads;
}

double calibrate_alpha(double initial_recon_loss, double initial_raw_penalty) {
  if (!(initial_raw_penalty > 1e-12)) {
    std::ostringstream os;
    os << "cannot calibrate alpha: initial raw penalty " << initial_raw_penalty
       << " is ~0 (dictionaries already aligned)";
    throw CalibrationError(os.str());
  }
  return initial_recon_loss / initial_raw_penalty;
}

double warmup_coefficient(std::size_t step, std::size_t warmup, double alpha) {
  if (warmup == 0 || step >= warmup) return alpha;
  const double frac = static_cast<double>(step) / static_cast<double>(warmup);
  return alpha * (1.0 - std::cos(std::numbers::pi * frac)) / 2.0;
}

}  // namespace mfr
