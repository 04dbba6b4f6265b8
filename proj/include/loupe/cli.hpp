#pragma once

#include <string>
#include <vector>

namespace loupe::cli {

// Entry point behind main(). Exit codes: 0 success, 1 configuration/usage
// error, 2 I/O error, 3 numeric failure (non-finite loss, gradcheck fail).
int run(const std::vector<std::string>& args);

}  // namespace loupe::cli
