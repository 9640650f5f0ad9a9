#include <iostream>

#include "vseg/commands.hpp"

int main(int argc, char** argv)
{
    return vseg::run_cli(argc, argv, std::cout, std::cerr);
}
