#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace minihouse::cli {

// Exit codes: 0 success, 1 usage or user error (or a failed bench check), 2 data corruption.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace minihouse::cli
