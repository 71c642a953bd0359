#pragma once

#include <iosfwd>

namespace nestmi {

// Dispatches exactly one subcommand and reports through the given streams.
// Returns 0 on success, 1 on validation or usage errors, 2 on numerical
// failures. Reports go to `out`; errors and timings go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nestmi
