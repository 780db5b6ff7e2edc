// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace chunksched {

// Exit codes of the command-line driver.
enum ExitCode {
  kExitOk = 0,
  kExitValidation = 1,
  kExitInput = 2,
  kExitNoFeasible = 3,
};

// Runs one subcommand; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace chunksched
