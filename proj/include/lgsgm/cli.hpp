#pragma once

#include <iosfwd>

namespace lgsgm {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

// Entry point of the `lgsgm` tool (gen, train, eval, retrieve). Output goes
// to `out`, diagnostics to `err`. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lgsgm
