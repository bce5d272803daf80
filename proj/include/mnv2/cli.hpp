#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mnv2 {

/// Runs one subcommand. args excludes the program name. Returns the process
/// exit code: 0 on success, 2 for usage errors, 1 for runtime failures.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

} // namespace mnv2
