#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace photoprior {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;     // missing or malformed input
inline constexpr int kExitPipeline = 4;  // decode, inference, provider or I/O failure

/// Runs the command line; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace photoprior
