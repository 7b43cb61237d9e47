// SPDX-License-Identifier: Apache-2.0
//
// The `gaitloop` command line: generate, train, eval, simulate, sweep and
// latency subcommands.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gaitloop::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

/// Runs one command; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace gaitloop::cli
