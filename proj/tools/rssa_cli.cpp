#include <iostream>

#include "rssa/cli.hpp"

int main(int argc, char** argv) { return rssa::run_cli(argc, argv, std::cout, std::cerr); }
