#pragma once

#include <iosfwd>

namespace finsler::cli {

// Exit codes: 0 success (all requested checks pass), 1 inequality failure,
// 2 solver nonconvergence, 3 invalid input.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace finsler::cli
