#pragma once

#include <string>
#include <vector>

namespace rfit {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  // gradient check or fit did not succeed
inline constexpr int kExitInputError = 2;

/// Runs one command; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace rfit
