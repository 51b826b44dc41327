#pragma once

#include <string>
#include <vector>

namespace terragen {

// Entry point shared by the terragen binary and the test suite.
// Exit codes: 0 success, 1 module error (or validation issues found),
// 2 usage error.
int run_cli(const std::vector<std::string>& args);

}  // namespace terragen
