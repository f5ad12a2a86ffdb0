#include <iostream>

#include "lgsgm/cli.hpp"

int main(int argc, char** argv) { return lgsgm::run_cli(argc, argv, std::cout, std::cerr); }
