#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace stn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point shared by the `stn` binary and the tests. args excludes the
// program name.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace stn::cli
