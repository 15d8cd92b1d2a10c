#include <iostream>

#include "tempo/cli/run.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tempo::cli::run_main(args, std::cout, std::cerr);
}
