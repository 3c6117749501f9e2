#pragma once

#include <iosfwd>

namespace marginlab {

/// Exit codes: 0 success, 1 invalid input or violated precondition, 2 solver
/// non-convergence or exponent-cap taint. Only the JSON output manifest goes to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace marginlab
