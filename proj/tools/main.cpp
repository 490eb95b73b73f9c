#include <iostream>

#include "hydrocar/cli.hpp"

int main(int argc, char** argv) { return hydrocar::run_cli(argc, argv, std::cout, std::cerr); }
