#include <iostream>

#include "sou/cli.hpp"

int main(int argc, char** argv) {
  return sou::cli_main({argv + 1, argv + argc}, std::cout, std::cerr);
}
