#include "gpbolus/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return gpbolus::app::cli_dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
