#pragma once

#include <string>
#include <vector>

namespace topseg::cli {

// Parses and executes one command line (program name excluded). Returns
// the process exit code: 0 success, 1 usage error, 2 data error.
int run(std::vector<std::string> args);

}  // namespace topseg::cli
