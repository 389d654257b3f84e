#include <iostream>
#include <string>
#include <vector>

#include "dgf/cli.hpp"

int main(int argc, char** argv) {
  return dgf::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
