#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prophet {

inline constexpr const char* kToolVersion = "1.0.0";

// Environment variable naming the default output directory.
inline constexpr const char* kOutputRootEnv = "PROPHET_OUT";

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

// Entry point of the prophet_lab tool; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prophet
