#pragma once

#include <string>
#include <vector>

namespace blcf::cli {

/// Exit codes of the command-line tool.
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 1;
inline constexpr int kIoError = 2;

/// Runs one tool invocation; args exclude the program name. Logs go to
/// stderr, data only to files named by flags.
int run(const std::vector<std::string>& args);

}  // namespace blcf::cli
