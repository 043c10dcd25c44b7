#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace octfusion {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitUsage = 2;

/// Runs `synth`, `fuse` or `compare`. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace octfusion
