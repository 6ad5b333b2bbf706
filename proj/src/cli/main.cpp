#include <iostream>

#include "her2/cli.hpp"

int main(int argc, char** argv) { return her2::cli::run({argv, argv + argc}, std::cout, std::cerr); }
