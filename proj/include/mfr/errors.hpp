// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mfr {

/// Error categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kConfig,       // invalid configuration or precondition
  kDimension,    // shape mismatch
  kNumeric,      // non-finite values, divergence
  kFormat,       // malformed file contents
  kIo,           // filesystem failure
  kCheckpoint,   // incompatible checkpoint set
  kCalibration,  // alpha calibration impossible
  kEmptyWindow,  // activation counter has seen no samples
  kCorrelation,  // Pearson r undefined
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::kDimension, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::kIo, w) {}
};
struct CheckpointError : Error {
  explicit CheckpointError(const std::string& w) : Error(ErrorKind::kCheckpoint, w) {}
};
struct CalibrationError : Error {
  explicit CalibrationError(const std::string& w) : Error(ErrorKind::kCalibration, w) {}
};
struct EmptyWindowError : Error {
  explicit EmptyWindowError(const std::string& w) : Error(ErrorKind::kEmptyWindow, w) {}
};
struct CorrelationError : Error {
  explicit CorrelationError(const std::string& w) : Error(ErrorKind::kCorrelation, w) {}
};

/// Malformed file. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::kFormat, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace mfr
