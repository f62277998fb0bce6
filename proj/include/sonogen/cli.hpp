#pragma once

#include <string>
#include <vector>

namespace sonogen::cli {

/// Entry point behind the sonogen binary. Exit codes: 0 success, 1 runtime
/// failure, 2 usage or configuration error.
int run(const std::vector<std::string>& args);

}  // namespace sonogen::cli
