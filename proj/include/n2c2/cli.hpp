#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace n2c2 {

// Entry point of the `n2c2` tool. `args` excludes the program name. Returns
// the process exit code; diagnostics go to `err` as a single line.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace n2c2
