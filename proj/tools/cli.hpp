#pragma once

#include <iosfwd>

namespace mti {

/// Entry point of the `mti` command. Returns the process exit code:
/// 0 on success, 2 for user errors (bad flags, unreadable or malformed
/// inputs, invalid configuration), 3 for internal failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mti
