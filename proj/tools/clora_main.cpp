// CLI entry point; subcommands are wired up in cli.hpp.
#include <cstdio>

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::printf("clora: cli not wired yet\n");
    return 1;
}
