#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tplreg::cli {

/// Exit statuses shared by every command.
enum Exit : int {
  kOk = 0,
  kConfigError = 1,  ///< bad flags, config file, I/O, or inputs that do not fit together
  kTooSmall = 2,     ///< reference smaller than one tile
};

/// Runs one command line (args[0] is the program name). Everything the
/// commands print goes to `out` and `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tplreg::cli
