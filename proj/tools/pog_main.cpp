#include <iostream>

#include "pog/cli.hpp"

int main(int argc, char** argv) { return pog::run_cli(argc, argv, std::cout, std::cerr); }
