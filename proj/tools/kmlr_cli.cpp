#include <iostream>

#include "kmlr/cli_io.hpp"

int main(int argc, char** argv) { return kmlr::run_cli(argc, argv, std::cout, std::cerr); }
