#include <iostream>
#include <string>
#include <vector>

#include "steerkit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return steerkit::cli::run(args, std::cout, std::cerr);
}
