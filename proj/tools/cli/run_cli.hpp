#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace lgnmt::cli {

// Runs one `lgnmt` invocation. argv[0] is the program name. Returns 0 on
// success, 1 on bad data or configuration, 2 on usage errors. Diagnostics
// go to `err`; command output goes to `out` or to files under the
// configured output directory.
int run_cli(const std::vector<std::string>& argv, std::istream& in = std::cin, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace lgnmt::cli
