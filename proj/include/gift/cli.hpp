#pragma once

#include <string>
#include <vector>

namespace gift {

// Exit codes: 0 success, 1 usage, 2 data error, 3 internal.
int run_cli(const std::vector<std::string>& args);

}  // namespace gift
