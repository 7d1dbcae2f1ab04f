#include <vector>

#include "gift/cli.hpp"

int main(int argc, char** argv) {
    return gift::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
