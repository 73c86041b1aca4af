#pragma once

#include <ostream>

namespace safenav::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// Environment variable overriding the output root of `train` and `select`.
inline constexpr const char* kOutputRootEnv = "SAFENAV_OUTPUT_ROOT";

// Parses argv and runs the chosen subcommand. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace safenav::cli
