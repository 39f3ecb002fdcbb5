#include <iostream>

#include "rdn/commands.hpp"

int main(int argc, char** argv) { return rdn::run_cli(argc, argv, std::cout, std::cerr); }
