#include <iostream>

#include "twb/cli.hpp"

int main(int argc, char** argv) { return twb::run_cli(argc, argv, std::cout, std::cerr); }
