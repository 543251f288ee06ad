// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include "vcwe/cli.hpp"

int main(int argc, char** argv) {
  return vcwe::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
