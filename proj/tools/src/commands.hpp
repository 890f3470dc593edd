#pragma once

#include <ostream>

namespace vaxsurr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

// Subcommands: simulate | fit | mc-study | ve-curve. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vaxsurr::cli
