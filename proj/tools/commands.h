// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace prefix_forest::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerificationFailed = 1,
  kExitInputError = 2,
  kExitLimitExceeded = 3,
};

// Parses arguments (argv[0] is the program name), runs one subcommand and
// maps every error onto an exit code. Never throws.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace prefix_forest::cli
