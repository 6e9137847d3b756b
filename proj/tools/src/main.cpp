#include <iostream>

#include "ecdd/cli/commands.hpp"

int main(int argc, char** argv) {
    std::ios::sync_with_stdio(false);
    return ecdd::cli::run(argc, argv, std::cin, std::cout, std::cerr);
}
