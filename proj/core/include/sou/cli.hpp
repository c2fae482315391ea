#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sou {

/// Runs the `sou` command line. `args` excludes the program name.
/// Returns 0 on success, 1 on validation failure, 2 on I/O, config or usage
/// errors.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sou
