#pragma once

#include <iosfwd>

namespace twb {

// Exit codes: 0 clean or success, 1 violation or failed job, 2 usage error,
// 3 checker runtime missing.
inline constexpr int kExitClean = 0;
inline constexpr int kExitViolation = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitEnvironment = 3;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace twb
