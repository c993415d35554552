#pragma once

#include <string>
#include <vector>

namespace solarspot::cli {

/// Run the command-line tool on already-split arguments (program name
/// excluded). Returns the process exit code: 0 success, 1 usage error,
/// 2 data or IO error, 3 internal failure.
int run(const std::vector<std::string>& args);

}  // namespace solarspot::cli
