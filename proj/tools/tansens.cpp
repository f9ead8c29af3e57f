#include <iostream>
#include <string>
#include <vector>

#include "tansens/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return tansens::cli::run(args, std::cout, std::cerr);
}
