// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "topomo/cli/cli.hpp"

int main(int argc, char** argv) {
  return topomo::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
