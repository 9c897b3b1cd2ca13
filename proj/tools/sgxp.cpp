#include <iostream>

#include "sgxp/cli/cli.hpp"

int main(int argc, char** argv) {
    return sgxp::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
