#pragma once

#include <iosfwd>

namespace stepprover::cli {

// Runs one subcommand. Exit codes: 0 success, 1 precondition violation or
// usage error, 2 I/O failure, 3 training diagnostic.
int cli_dispatch(int argc, const char* const* argv);
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stepprover::cli
