#pragma once

// Command-line front end. `run` is the whole program minus process exit so it
// can be driven in-process; stdout receives data only, stderr diagnostics.

#include <iosfwd>
#include <string>
#include <vector>

namespace dgf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // check failed, training did not converge, numerical error
inline constexpr int kExitUsage = 2;    // bad flags, unreadable or malformed files
inline constexpr int kExitMismatch = 3; // incompatible shapes or channel counts

/// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dgf::cli
