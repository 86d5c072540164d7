#pragma once

#include <string>
#include <vector>

namespace rankalign {

/// Runs the command line given argv-style arguments (without the program
/// name). Returns the process exit code; errors print one machine-parsable
/// "error category=... message=..." line on stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace rankalign
