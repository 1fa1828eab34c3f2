// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Feature similarity between dictionaries. A dictionary is a matrix whose
// rows are features (rows of W under the tied decoder, or Fᵀ for the ground
// truth). Zero-norm features have similarity 0 against everything.

#pragma once

#include <cstddef>
#include <vector>

#include "mfr/numerics.hpp"

namespace mfr {

/// Entry (i, j) is cos(A_i, B_j).
using SimilarityTable = Matrix;

struct Pair {
  std::size_t row = 0;
  std::size_t col = 0;
  double similarity = 0.0;
  friend bool operator==(const Pair&, const Pair&) = default;
};

/// Partial bijection, one entry per row when rows ≤ cols (or per column
/// otherwise), sorted by row.
struct Assignment {
  std::vector<Pair> pairs;
  double total() const;
};

/// Rows scaled to unit length; zero rows stay zero.
Matrix normalize_rows(const Matrix& a);

SimilarityTable cosine_table(const Matrix& a, const Matrix& b);

struct BestMatch {
  std::size_t index = 0;
  double similarity = 0.0;
};

/// Per row, the column with the largest entry (lowest index on ties).
std::vector<BestMatch> row_maxima(const Matrix& table);

/// For every feature of a, its most similar feature in b.
std::vector<BestMatch> max_cosine_pairs(const Matrix& a, const Matrix& b);

/// Maximum-weight bipartite assignment (O(n²m) shortest augmenting paths).
/// Among co-optimal assignments, returns the lexicographically smallest
/// row→column mapping.
Assignment hungarian(const SimilarityTable& table);

/// Mean over features of a of the best cosine against any feature of b.
double mmcs(const Matrix& a, const Matrix& b);

/// (mmcs(a, b) + mmcs(b, a)) / 2.
double mmcs_symmetric(const Matrix& a, const Matrix& b);

}  // namespace mfr
