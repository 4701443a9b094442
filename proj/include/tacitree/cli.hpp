#pragma once

#include <iosfwd>

namespace tacitree {

// Entry point of the `tacitree` tool. Returns the process exit code:
// 0 success, 1 configuration, 2 input, 3 backend.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tacitree
