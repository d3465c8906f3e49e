#include <vector>
#include <string>

#include "ktrace/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ktrace::run_command(args);
}
