#include <string>
#include <vector>

#include "solarspot/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return solarspot::cli::run(args);
}
