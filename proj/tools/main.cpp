#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return safenav::cli::run(argc, argv, std::cout, std::cerr); }
