#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gino::cli {

enum ExitCode : int { ok = 0, validation = 2, io = 3, divergence = 4 };

/// Runs one `gino` invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gino::cli
