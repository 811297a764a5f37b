#include <string>
#include <vector>

#include "pae/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return pae::cli::run(args);
}
