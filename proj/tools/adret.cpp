#include <iostream>

#include "adret/commands.hpp"

int main(int argc, char** argv) { return adret::cli::run_cli(argc, argv, std::cout, std::cerr); }
