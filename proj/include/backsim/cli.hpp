#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace backsim::cli {

/// Process exit statuses.
enum ExitCode : int {
  kOk = 0,
  kValidationFailure = 1,
  kInputError = 2,
  kGuardExceeded = 3,
  kNoSignal = 4,
};

/// Runs the command line `args` (without the program name). Data goes to
/// `out` unless --out names a file; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace backsim::cli
