#include "regretel/harness.hpp"

#include <iostream>

int main(int argc, char** argv) { return regretel::run_cli(argc, argv, std::cout, std::cerr); }
