#include <iostream>

#include "logipath/cli_io.hpp"

int main(int argc, char** argv) { return logipath::run(argc, argv, std::cout, std::cerr); }
