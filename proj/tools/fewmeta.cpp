#include <iostream>
#include <string>
#include <vector>

#include "fewmeta/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return fewmeta::cli::run(args, std::cout, std::cerr);
}
