// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Training configuration, presets and the strict JSON loader.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mfr/numerics.hpp"
#include "mfr/regularization.hpp"
#include "mfr/storage.hpp"
#include "mfr/synthgen.hpp"

namespace mfr {

enum class TrainMode { kBaseline, kMfr };

struct SaeSpec {
  std::size_t hidden = 512;
  std::size_t k = 36;
  /// Seed of the SAE's initialization streams. Defaults to
  /// mix_seed(seed, index) when absent.
  std::optional<std::uint64_t> init_seed;
};

enum class DataSourceKind { kSynthetic, kActivations };

struct DataSource {
  DataSourceKind kind = DataSourceKind::kSynthetic;
  GenConfig gen;
  std::filesystem::path path;
  /// Finite activation files: wrap around (true) or fail when exhausted.
  bool wrap = true;
};

struct PenaltyConfig {
  bool calibrated = false;
  double alpha = 3.0;
  std::size_t warmup_steps = 100;
  bool symmetrize = false;
};

struct TrainConfig {
  TrainMode mode = TrainMode::kBaseline;
  std::vector<SaeSpec> saes;
  AdamWHyper optim;
  std::size_t batch_size = 10000;
  std::uint64_t total_examples = 100'000'000;
  /// Stop after this many steps when nonzero.
  std::uint64_t max_steps = 0;
  DataSource data;
  ReinitPolicy reinit;
  PenaltyConfig penalty;
  std::size_t log_every = 100;
  std::size_t checkpoint_every = 0;
  FloatWidth checkpoint_precision = FloatWidth::kF32;
  bool checkpoint_moments = true;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::size_t n_saes() const noexcept { return saes.size(); }
  std::uint64_t total_steps() const noexcept;
  std::uint64_t sae_init_seed(std::size_t index) const;
  /// Throws ConfigError listing every problem.
  void validate() const;
};

inline constexpr std::string_view kPresetNames[] = {"paper-synthetic", "paper-lm", "paper-eeg"};

/// Baseline-mode preset; callers switch mode afterwards. Unknown names throw.
TrainConfig preset(std::string_view name);

/// Sets mode and the mode-dependent default (reinit enabled only for MFR).
void set_mode(TrainConfig& cfg, TrainMode mode);

std::string_view to_string(TrainMode m);

struct ConfigKey {
  std::string_view name;
  std::string_view description;
};

/// Every key the JSON loader accepts, dotted for nested objects.
std::span<const ConfigKey> config_keys();

/// Parses a config document. An optional "preset" key picks the base values;
/// everything else overrides it. Unknown keys and invalid values are all
/// reported together in one ConfigError.
TrainConfig parse_config(const nlohmann::json& doc);
TrainConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const TrainConfig& cfg);

}  // namespace mfr
