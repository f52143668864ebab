#include <iostream>

#include "biomm/cli.hpp"

int main(int argc, char** argv) { return biomm::run_cli(argc, argv, std::cout, std::cerr); }
