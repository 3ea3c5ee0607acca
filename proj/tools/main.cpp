#include <vector>

#include "defisim/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return defisim::run_cli(args);
}
