#include "taylorglo/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return taylorglo::cli_dispatch(argc, argv, std::cout, std::cerr); }
