// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic superposed-feature data with a known ground-truth dictionary.
//
// G features live in d < G dimensions. Feature j is drawn with weight
// proportional to λ^j, features are split into E contiguous groups, and each
// sample activates K features inside each of `groups_per_sample` randomly
// chosen groups with U(0,1) coefficients.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mfr/numerics.hpp"

namespace mfr {

struct GenConfig {
  std::size_t d = 256;
  std::size_t G = 512;
  std::size_t E = 12;
  std::size_t K = 3;
  double lambda = 0.99;
  std::size_t groups_per_sample = 1;
  std::uint64_t seed = 0;

  /// Throws ConfigError listing every violated constraint.
  void validate() const;
};

/// Half-open feature-index range [begin, end).
struct GroupRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const GroupRange&, const GroupRange&) = default;
};

struct FeatureMatrix {
  Matrix F;                    // d × G, column j is feature j
  std::vector<double> probs;   // p_j, j = 0..G-1
  std::vector<GroupRange> groups;
  GenConfig config;

  std::size_t d() const noexcept { return F.rows(); }
  std::size_t feature_count() const noexcept { return F.cols(); }
  /// Features as rows (G × d), the layout the similarity code expects.
  Matrix features_as_rows() const { return F.transposed(); }
};

struct DataBatch {
  Matrix X;  // n × d
  Matrix A;  // n × G sparse coefficients
};

/// p_j = λ^j / Σ_{k=1..G} λ^k for j = 1..G (returned 0-indexed).
std::vector<double> feature_probabilities(std::size_t G, double lambda);

/// E contiguous blocks covering [0, G); sizes differ by at most one, with the
/// larger blocks first. Equal blocks whenever E divides G.
std::vector<GroupRange> partition_groups(std::size_t G, std::size_t E);

/// Stream ids used by the generator. Batch b is drawn from stream
/// batch_stream(b), so batches are independent of generation order.
inline constexpr std::uint64_t kFeatureStream = 1;
inline constexpr std::uint64_t batch_stream(std::uint64_t b) { return (1ULL << 40) + b; }

FeatureMatrix sample_feature_matrix(const GenConfig& cfg);

/// Draws n samples from `rng`.
DataBatch sample_batch(const FeatureMatrix& fm, std::size_t n, RngStream& rng);

/// Batch `index` of the seeded stream for fm.config.seed.
DataBatch sample_batch_at(const FeatureMatrix& fm, std::size_t n, std::uint64_t index);

}  // namespace mfr
