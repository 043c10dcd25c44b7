#include <iostream>

#include "octfusion/cli.hpp"

int main(int argc, char** argv) {
  return octfusion::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
