#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctrace::cli {

/* Runs one command line (without the program name). Exit codes: 0 success,
   1 protocol-level rejection, 2 usage or input error. */
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctrace::cli
