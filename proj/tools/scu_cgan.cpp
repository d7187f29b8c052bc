#include "scu/cli/cli.hpp"

int main(int argc, char** argv) { return scu::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
