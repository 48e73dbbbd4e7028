#include <iostream>

#include "ctrlvdiff/cli.hpp"

int main(int argc, char** argv) { return ctrlvdiff::run_cli(argc, argv, std::cout, std::cerr); }
