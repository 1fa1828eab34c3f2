// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Post-hoc evaluation of trained dictionaries: recovery of the ground-truth
// features, cross-SAE similarity scatter tables, decoder distances and the
// JSON/CSV report.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mfr/numerics.hpp"
#include "mfr/synthgen.hpp"

namespace mfr {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::string_view kScatterHeader =
    "sae_id,feature_id,cross_sae_sim,ground_truth_sim,activation_freq";

/// One learned feature. Unknown quantities are NaN.
struct ScatterRow {
  std::size_t sae_id = 0;
  std::size_t feature_id = 0;
  double cross_sae_sim = 0.0;     // Hungarian-paired cosine in the partner SAE
  double ground_truth_sim = 0.0;  // best cosine against any ground-truth feature
  double activation_freq = 0.0;
};

/// mmcs(W, Fᵀ): how well the rows of W recover the generating features.
double ground_truth_mmcs(const Matrix& W, const FeatureMatrix& fm);

/// Per row of W, the best cosine against any ground-truth feature.
std::vector<double> ground_truth_similarities(const Matrix& W, const FeatureMatrix& fm);

/// Rows for the features of W1 paired one-to-one with W2 by Hungarian
/// assignment on cosine similarity; min(rows of W1, rows of W2) rows, in
/// feature order. `fm` and `freq1` may be absent (NaN columns).
std::vector<ScatterRow> similarity_scatter(const Matrix& W1, const Matrix& W2,
                                           const FeatureMatrix* fm,
                                           std::span<const double> freq1, std::size_t sae_id);

/// Rows with cross_sae_sim ≥ tau_hi and ground_truth_sim ≤ tau_lo.
std::size_t cluster_count(std::span<const ScatterRow> rows, double tau_hi = 0.8,
                          double tau_lo = 0.4);

/// Frobenius distance after reordering the rows of Wj to best match Wi.
/// The order maximizes Σ⟨Wi_r, Wj_π(r)⟩, which is exactly the permutation
/// minimizing the distance, so the result is a pseudometric on dictionaries
/// up to feature order. Throws DimensionError on shape mismatch.
double decoder_l2_distance(const Matrix& Wi, const Matrix& Wj);

/// Plain Frobenius distance without alignment.
double decoder_l2_raw(const Matrix& Wi, const Matrix& Wj);

struct EvalReport {
  std::vector<double> gt_mmcs;  // empty without ground truth
  Matrix pairwise_mmcs;         // (i, j) = mmcs(W_i, W_j)
  std::optional<double> pearson_r;
  std::vector<std::size_t> cluster_count;  // per SAE, empty without ground truth
  Matrix l2_aligned;                       // NaN where shapes differ
  Matrix l2_raw;
  double tau_hi = 0.8;
  double tau_lo = 0.4;
  std::vector<ScatterRow> scatter;
  int schema_version = kReportSchemaVersion;
};

struct EvalOptions {
  double tau_hi = 0.8;
  double tau_lo = 0.4;
};

/// Evaluates an ensemble. Each SAE's scatter rows pair it with the next SAE
/// (cyclically); `frequencies` is empty or holds one per-unit vector per SAE.
/// Throws ConfigError on an empty ensemble, DimensionError when input
/// dimensions disagree.
EvalReport evaluate(std::span<const Matrix> dictionaries, const FeatureMatrix* fm,
                    std::span<const std::vector<double>> frequencies, EvalOptions opts = {});

nlohmann::json report_json(const EvalReport& r);

/// Writes report.json and scatter.csv into `dir`. Throws IoError naming the path.
void emit_report(const EvalReport& r, const std::filesystem::path& dir);

/// Parses a directory written by emit_report.
EvalReport read_report(const std::filesystem::path& dir);

std::vector<ScatterRow> read_scatter_csv(const std::filesystem::path& path);
void write_scatter_csv(const std::filesystem::path& path, std::span<const ScatterRow> rows);

}  // namespace mfr
