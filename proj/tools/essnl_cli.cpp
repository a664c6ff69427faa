#include <iostream>

#include "essnl/cli.hpp"

int main(int argc, char** argv) { return essnl::cli_main(argc, argv, std::cout, std::cerr); }
