// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

// The `mfr` command line: gen, train, eval, match and report.
//
// Exit codes: 0 success, 1 I/O or file format, 2 configuration or usage,
// 3 numeric failure (divergence, non-finite values, impossible calibration).

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Runs one invocation. `args` includes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfr::cli
