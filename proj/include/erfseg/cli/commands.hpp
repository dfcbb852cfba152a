#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace erfseg::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,     // I/O and other runtime errors
  kConfigError = 2, // invalid flags, config or config/data mismatch
  kDivergence = 3,  // non-finite loss or parameters during training
  kAssertion = 4,   // a requested ordering check or a manifest verification failed
};

/// Entry point of the `erfseg` tool. `args[0]` is the program name.
/// Subcommands: synth, train, eval, erf, verify; see `erfseg --help`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace erfseg::cli
