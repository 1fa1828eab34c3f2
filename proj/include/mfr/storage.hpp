// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// Binary file formats and the metrics log. All integers are little-endian;
// payload floats are IEEE-754 little-endian.
//
//   MFRA activations   24-byte header: "MFRA" u32 version=1, u32 dim, u64 count,
//                      u32 dtype (0 = f32); then count × dim values, row-major.
//   MFRF features      40-byte header: "MFRF" u32 version=1, u32 d, u32 G,
//                      f64 lambda, u32 E, u32 K, u64 seed; then F (d × G f32).
//   MFRC checkpoint    32-byte header: "MFRC" u32 version=1, u32 h, u32 d, u32 k,
//                      u64 step, u32 flags; then W (h × d), b (h). With flag
//                      bit 0 the optimizer follows: u64 adam step, m_W, v_W,
//                      m_b, v_b. Flag bit 1 stores every float as f64 instead
//                      of f32 (exact resume).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "mfr/numerics.hpp"
#include "mfr/sae.hpp"
#include "mfr/synthgen.hpp"

namespace mfr {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kActivationHeaderBytes = 24;
inline constexpr std::size_t kFeatureHeaderBytes = 40;
inline constexpr std::size_t kCheckpointHeaderBytes = 32;

struct ActivationHeader {
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::uint32_t dtype = 0;
};

void write_activations(const std::filesystem::path& path, const Matrix& X);

/// Appends rows in chunks; the row count in the header is patched by finish()
/// (or the destructor).
class ActivationWriter {
 public:
  ActivationWriter(const std::filesystem::path& path, std::size_t dim);
  ActivationWriter(const ActivationWriter&) = delete;
  ActivationWriter& operator=(const ActivationWriter&) = delete;
  ~ActivationWriter();

  void append(const Matrix& rows);
  void finish();
  std::uint64_t rows_written() const noexcept { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t dim_;
  std::uint64_t count_ = 0;
  bool finished_ = false;
};
Matrix read_activations(const std::filesystem::path& path);

/// Streaming reader; holds the file open and reads row ranges on demand.
class ActivationReader {
 public:
  explicit ActivationReader(const std::filesystem::path& path);

  const ActivationHeader& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(header_.count); }
  std::size_t dim() const noexcept { return header_.dim; }

  /// Rows [first, first + n). Throws FormatError when the range passes the end.
  Matrix read_rows(std::size_t first, std::size_t n);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  ActivationHeader header_;
};

void write_features(const std::filesystem::path& path, const FeatureMatrix& fm);
/// Probabilities and groups are rebuilt from the stored parameters.
/// groups_per_sample is not stored and comes back as 1.
FeatureMatrix read_features(const std::filesystem::path& path);

enum class FloatWidth { kF32, kF64 };

struct OptimizerMoments {
  std::uint64_t step = 0;
  Matrix m_W, v_W;
  std::vector<double> m_b, v_b;
  friend bool operator==(const OptimizerMoments&, const OptimizerMoments&) = default;
};

struct Checkpoint {
  SaeParams params;
  std::uint64_t step = 0;
  std::optional<OptimizerMoments> moments;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointHasMoments = 1u << 0;
inline constexpr std::uint32_t kCheckpointF64 = 1u << 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                      FloatWidth width = FloatWidth::kF32);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Rounds through f32, the precision of the default on-disk representation.
double to_f32(double v);

/// One metrics row. NaN fields are written as "nan".
struct MetricsRecord {
  std::uint64_t step = 0;
  std::size_t sae_id = 0;
  double recon_loss = 0.0;
  double penalty_raw = 0.0;
  double alpha_eff = 0.0;
  double mmcs_mean = 0.0;
  double inactivity = 0.0;
  bool reinit_event = false;
};

inline constexpr const char* kMetricsHeader =
    "step,sae_id,recon_loss,penalty_raw,alpha_eff,mmcs_mean,inactivity,reinit_event";

std::string format_metrics_line(const MetricsRecord& r);
MetricsRecord parse_metrics_line(const std::string& line);

/// Appends rows to a CSV file, writing the header once (when the file is new
/// or empty) and flushing after every record.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void append(const MetricsRecord& r);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

void append_metrics(const std::filesystem::path& path, const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

}  // namespace mfr
