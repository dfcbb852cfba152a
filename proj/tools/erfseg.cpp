#include <iostream>
#include <string>
#include <vector>

#include "erfseg/cli/commands.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return erfseg::cli::run(args, std::cout, std::cerr);
}
