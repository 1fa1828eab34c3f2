// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// TopK sparse autoencoder with a tied decoder:
//
//   z = W x + b,   h = topk(z),   x̂ = Wᵀ h
//
// W is h × d. Row i of W is both the encoder filter and the decoder feature
// of hidden unit i. There is no decoder bias.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfr/numerics.hpp"

namespace mfr {

struct SaeParams {
  Matrix W;               // hidden × d
  std::vector<double> b;  // hidden
  std::size_t k = 1;

  std::size_t hidden() const noexcept { return W.rows(); }
  std::size_t input_dim() const noexcept { return W.cols(); }
  void validate() const;

  friend bool operator==(const SaeParams&, const SaeParams&) = default;
};

/// W entries i.i.d. U[−1/√d, 1/√d], b = 0.
SaeParams init_sae(std::size_t hidden, std::size_t d, std::size_t k, RngStream& rng);

struct TopK {
  std::vector<double> values;        // dense, zeros outside the active set
  std::vector<std::size_t> indices;  // ascending
};

/// Keeps the k largest entries. Ties are resolved toward the lowest index so
/// exactly k entries survive.
TopK topk(std::span<const double> v, std::size_t k);

/// Selects the active set into `out` (ascending), reusing its storage.
void topk_indices(std::span<const double> v, std::size_t k, std::vector<double>& scratch,
                  std::vector<std::size_t>& out);

struct ForwardTrace {
  Matrix pre;                        // n × hidden, W x + b
  std::vector<std::size_t> active;   // n × k, ascending per sample
  std::vector<double> active_value;  // n × k, pre-activation of each active unit
  Matrix reconstruction;             // n × d
  std::size_t k = 0;

  std::size_t samples() const noexcept { return pre.rows(); }
  std::span<const std::size_t> active_of(std::size_t s) const {
    return {active.data() + s * k, k};
  }
  std::span<const double> values_of(std::size_t s) const {
    return {active_value.data() + s * k, k};
  }
  /// Sparse hidden layer expanded to n × hidden.
  Matrix hidden_dense() const;
};

ForwardTrace forward(const SaeParams& p, const Matrix& X);

/// Mean over samples of ‖x − x̂‖².
double reconstruction_loss(const Matrix& X, const Matrix& Xhat);

struct SaeGradients {
  Matrix dW;
  std::vector<double> db;
};

/// Exact gradient of reconstruction_loss with the active sets held fixed.
/// Includes both the encoder and the tied-decoder use of W.
SaeGradients backward(const SaeParams& p, const ForwardTrace& trace, const Matrix& X);

/// Smallest gap, over samples, between the k-th and (k+1)-th largest
/// pre-activation. +inf when k equals the hidden size.
double topk_margin(const ForwardTrace& trace);

}  // namespace mfr
