#include <iostream>

#include "tacitree/cli.hpp"

int main(int argc, char** argv) { return tacitree::run_cli(argc, argv, std::cout, std::cerr); }
