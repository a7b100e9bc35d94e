#pragma once

#include <iostream>

namespace nucdiff::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  // I/O and other unexpected failures
  kUsage = 2,
  kNotConverged = 3,
  kInputFormat = 4,
  kNumerical = 5,
};

/// Entry point of the `nucdiff` tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace nucdiff::cli
