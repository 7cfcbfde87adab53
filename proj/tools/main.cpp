#include "binembed/cli.hpp"

int main(int argc, char** argv) {
    return binembed::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
