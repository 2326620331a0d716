#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace semd {

// Exit codes: 0 ok, 1 bad arguments or invalid input detected before any
// compute, 2 failure while computing.
int run_cli(int argc, const char* const* argv);

// Same, with explicit streams (tests). args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace semd
