#include "prkd/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return prkd::cli::run(argc, argv, std::cout, std::cerr); }
