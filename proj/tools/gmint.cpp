#include <iostream>

#include "gmint/cli/commands.h"

int main(int argc, char** argv) { return gmint::cli::run_cli(argc, argv, std::cout, std::cerr); }
