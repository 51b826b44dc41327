#include <vector>
#include <string>

#include "terragen/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return terragen::run_cli(args);
}
