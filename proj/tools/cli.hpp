#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace forge::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

// args excludes the program name. Errors go to `err` as one JSON object.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace forge::cli
