#pragma once

#include <iosfwd>

namespace prkd::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_config = 3;
inline constexpr int exit_runtime = 4;

/// Entry point of the `prkd` tool. Results go to `out`; progress and the final
/// one-line error (if any) go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace prkd::cli
