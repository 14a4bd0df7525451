#include <iostream>

#include "palettediff/cli.hpp"
#include "palettediff/util.hpp"

int main(int argc, char** argv) {
  palettediff::retain_freed_memory();
  return palettediff::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
