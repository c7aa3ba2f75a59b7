#include "decaylab/cli.hpp"

#include <iostream>

int main(int argc, char **argv)
{
    return decaylab::cli::main_entry(argc, argv, std::cout, std::cerr);
}
