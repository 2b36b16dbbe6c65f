#include "ugsd/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ugsd::run_cli(argc, argv, std::cout, std::cerr); }
