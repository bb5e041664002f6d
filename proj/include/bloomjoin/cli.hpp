#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bloomjoin::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point behind the bloomjoin executable. args excludes the program
// name. Machine-readable output goes to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bloomjoin::cli
