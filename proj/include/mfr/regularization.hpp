// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Mutual feature regularization: the activation-frequency inactivity metric,
// conditional reinitialization, and the all-pairs MMCS penalty
//
//   P = α / C(N,2) · Σ_{i<j} (1 − MMCS(W_i, W_j))
//
// together with its gradient, α calibration and the cosine warmup.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfr/numerics.hpp"
#include "mfr/sae.hpp"

namespace mfr {

/// Per-unit activation counts over a probe window.
class ActivationCounter {
 public:
  ActivationCounter() = default;
  explicit ActivationCounter(std::size_t hidden) : counts_(hidden, 0) {}

  void record(const ForwardTrace& trace);
  void reset() noexcept;

  std::size_t hidden() const noexcept { return counts_.size(); }
  std::uint64_t samples_seen() const noexcept { return samples_; }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }
  /// Per-unit empirical activation frequency; zeros if nothing was seen.
  std::vector<double> frequencies() const;

  /// Restores a serialized counter. Throws ConfigError on inconsistent data.
  static ActivationCounter from_counts(std::vector<std::uint64_t> counts, std::uint64_t samples);

  friend bool operator==(const ActivationCounter&, const ActivationCounter&) = default;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t samples_ = 0;
};

/// (1/N) Σ_i |f_i − k/N| / (k/N), where f_i is the activation frequency of
/// unit i and N the hidden size. Zero when every unit fires equally often;
/// 2(N−k)/N when all activity sits on exactly k units.
double inactivity_metric(const ActivationCounter& counter, std::size_t k);

struct ReinitPolicy {
  bool enabled = true;
  std::size_t probe_steps = 100;
  double threshold = 1.0;
  std::size_t max_attempts = 10;
  /// Probe again probe_steps after every reinitialization until the metric
  /// drops below the threshold or attempts run out.
  bool reprobe = false;

  void validate() const;
};

enum class ReinitDecision { kKeep, kReinitialize, kExhausted };

/// `steps_since_init` counts optimizer steps since the SAE's current
/// initialization. kExhausted means the metric is above threshold but the
/// attempt budget is spent; the caller falls back to its best init.
ReinitDecision should_reinitialize(double metric, const ReinitPolicy& policy,
                                   std::size_t steps_since_init, std::size_t attempts);

/// Stream id of initialization `attempt` (0 = the first init). The SAE's
/// identity lives in its init seed, so one SAE trained alone with the same
/// seed draws the same weights as it does inside an ensemble.
inline constexpr std::uint64_t init_stream(std::uint64_t attempt) { return (2ULL << 40) + attempt; }

/// Fresh weights of the same shape and k, drawn as init_sae does.
SaeParams reinitialize(const SaeParams& p, RngStream& rng);

struct PenaltyOptions {
  bool symmetrize = false;
};

/// (1/C(N,2)) Σ_{i<j} (1 − MMCS(W_i, W_j)), i.e. the penalty at α = 1.
double raw_penalty(std::span<const Matrix> weights, PenaltyOptions opts = {});

double mfr_penalty(std::span<const Matrix> weights, double alpha, PenaltyOptions opts = {});

/// Gradient of mfr_penalty w.r.t. every dictionary, with each feature's
/// best-match partner held fixed for the evaluation.
std::vector<Matrix> penalty_gradient(std::span<const Matrix> weights, double alpha,
                                     PenaltyOptions opts = {});

/// α such that α · raw_penalty equals the initial reconstruction loss.
double calibrate_alpha(double initial_recon_loss, double initial_raw_penalty);

/// α · (1 − cos(π · min(step/warmup, 1))) / 2; α for every step if warmup = 0.
double warmup_coefficient(std::size_t step, std::size_t warmup, double alpha);

}  // namespace mfr
