// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Lockstep training of an SAE ensemble. Each step every SAE sees the same
// batch; per-SAE forward/backward and optimizer phases may run on worker
// threads, the MFR penalty is computed between them on a consistent
// snapshot of all dictionaries. Results never depend on the worker count.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "mfr/config.hpp"
#include "mfr/regularization.hpp"
#include "mfr/sae.hpp"
#include "mfr/storage.hpp"
#include "mfr/synthgen.hpp"

namespace mfr {

/// Supplies batch `index` of the shared training stream.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::size_t dim() const = 0;
  virtual Matrix batch(std::uint64_t index, std::size_t size) = 0;
};

class SyntheticSource final : public BatchSource {
 public:
  explicit SyntheticSource(FeatureMatrix fm) : fm_(std::move(fm)) {}
  std::size_t dim() const override { return fm_.d(); }
  Matrix batch(std::uint64_t index, std::size_t size) override;
  const FeatureMatrix& features() const noexcept { return fm_; }

 private:
  FeatureMatrix fm_;
};

/// Consecutive row windows of an MFRA file, wrapping or failing at the end.
class ActivationFileSource final : public BatchSource {
 public:
  ActivationFileSource(const std::filesystem::path& path, bool wrap);
  std::size_t dim() const override { return reader_.dim(); }
  Matrix batch(std::uint64_t index, std::size_t size) override;

 private:
  ActivationReader reader_;
  bool wrap_;
};

std::unique_ptr<BatchSource> make_source(const TrainConfig& cfg);

struct SaeSlot {
  SaeParams params;
  AdamWState opt_W;
  AdamWState opt_b;
  ActivationCounter window;
  std::uint64_t init_step = 0;       // global step at which the current init began
  std::size_t attempts = 0;          // reinitializations performed
  std::size_t current_attempt = 0;   // init stream of the current weights
  std::size_t best_attempt = 0;
  double best_metric = std::numeric_limits<double>::infinity();
  bool probing_done = false;
};

struct ProbeRecord {
  std::uint64_t step = 0;  // 0-based index of the step after which the probe ran
  std::size_t sae = 0;
  std::uint64_t steps_since_init = 0;
  double metric = 0.0;
  bool decided = false;
  ReinitDecision decision = ReinitDecision::kKeep;
};

struct EnsembleState {
  std::vector<SaeSlot> saes;
  std::uint64_t step = 0;  // completed steps
  std::optional<double> alpha;
  double calibration_recon_loss = 0.0;
  double calibration_raw_penalty = 0.0;
  std::vector<ProbeRecord> probes;

  std::size_t input_dim() const { return saes.empty() ? 0 : saes.front().params.input_dim(); }
  std::vector<Matrix> dictionaries() const;
};

struct TrainOptions {
  /// Directory for metrics.csv, checkpoints and run state; none when empty.
  std::filesystem::path out_dir;
  bool progress = false;
  /// Keep every metrics row in memory (Trainer::log()).
  bool keep_log = true;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, TrainOptions opts = {});
  Trainer(TrainConfig cfg, std::unique_ptr<BatchSource> source, TrainOptions opts = {});

  /// Continues from per-SAE checkpoints (one per SAE, in order). Loads the
  /// run-state sidecar when `state_path` exists; otherwise resumes in a
  /// degraded mode and warns. Throws CheckpointError on incompatible files.
  static Trainer resume(TrainConfig cfg, const std::vector<std::filesystem::path>& checkpoints,
                        const std::filesystem::path& state_path, TrainOptions opts = {});

  /// Runs until cfg.total_steps().
  void run();
  /// Runs `n` more steps (stops early at the configured total).
  void run_steps(std::uint64_t n);
  void step_once();

  bool finished() const noexcept { return state_.step >= cfg_.total_steps(); }
  const TrainConfig& config() const noexcept { return cfg_; }
  const EnsembleState& state() const noexcept { return state_; }
  const std::vector<MetricsRecord>& log() const noexcept { return log_; }
  BatchSource& source() noexcept { return *source_; }
  /// Reconstruction loss of each SAE on the most recent batch.
  const std::vector<double>& last_losses() const noexcept { return last_losses_; }
  std::vector<std::string> warnings() const { return warnings_; }

  void write_checkpoints(const std::filesystem::path& dir, const std::string& suffix) const;
  nlohmann::json state_json() const;

 private:
  void init_slots();
  void apply_state_json(const nlohmann::json& doc);
  void reinit_slot(std::size_t i, std::size_t attempt);
  template <class Fn>
  void for_each_sae(Fn&& fn);

  TrainConfig cfg_;
  TrainOptions opts_;
  std::unique_ptr<BatchSource> source_;
  EnsembleState state_;
  std::vector<MetricsRecord> log_;
  std::vector<double> last_losses_;
  std::vector<std::string> warnings_;
  std::unique_ptr<MetricsWriter> writer_;
};

/// Inputs for the cross-SAE similarity analysis of two baseline SAEs.
struct PairAnalysis {
  Matrix W1, W2;
  ActivationCounter freq1, freq2;
  FeatureMatrix features;
  std::vector<MetricsRecord> log;
};

/// Trains cfg (N = 2, baseline, synthetic data) and measures activation
/// frequencies on a held-out batch of `eval_samples`.
PairAnalysis train_baseline_pair_for_analysis(const TrainConfig& cfg,
                                              std::size_t eval_samples = 10000);

/// Activation counts of `p` over X.
ActivationCounter count_activations(const SaeParams& p, const Matrix& X);

/// Stream index used for held-out evaluation batches.
inline constexpr std::uint64_t kEvalBatchIndex = 1ULL << 39;

}  // namespace mfr
