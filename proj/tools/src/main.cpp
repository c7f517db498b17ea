// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "claa/cli.hpp"

int main(int argc, char** argv) { return claa::cli::run(argc, argv, std::cout, std::cerr); }
