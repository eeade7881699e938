#include <iostream>

#include "evseq/cli.hpp"

int main(int argc, char** argv) { return evseq::run_cli(argc, argv, std::cout, std::cerr); }
