#pragma once

namespace bcg {

// Runs one subcommand. Returns 0 on success, 1 on usage errors and 2 on data,
// I/O or numeric failures.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace bcg
