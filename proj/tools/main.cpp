#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mti::run_cli(argc, argv, std::cout, std::cerr); }
