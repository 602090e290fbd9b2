#include <iostream>

#include "mozoo/cli.hpp"

int main(int argc, char** argv) {
  return mozoo::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
