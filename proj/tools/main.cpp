#include <string>
#include <vector>

#include "cli/run_cli.hpp"

int main(int argc, char** argv) {
  return lgnmt::cli::run_cli(std::vector<std::string>(argv, argv + argc));
}
