#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace zsr::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitUsage = 2,
  kExitOverwrite = 3,
  kExitProtocol = 4,
  kExitCorrupt = 5,
};

// Runs one command line (args exclude the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace zsr::cli
