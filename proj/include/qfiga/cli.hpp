#pragma once

#include <string>
#include <vector>

namespace qfiga {

/// Command-line entry point; returns the process exit code
/// (0 success, 2 input error, 3 numeric failure).
int cli_run(const std::vector<std::string>& args);

}  // namespace qfiga
