#include <iostream>

#include "bsdesign/cli.hpp"

int main(int argc, char** argv) { return bsdesign::cli::run_cli(argc, argv, std::cout, std::cerr); }
