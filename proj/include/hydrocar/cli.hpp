#pragma once

#include <ostream>

namespace hydrocar {

// Exit codes: 0 success, 2 input or validation failure, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hydrocar
