// Command-line front end. Subcommands are registered in cli_commands.hpp;
// this translation unit only owns main.

#include "cli_commands.hpp"

int main(int argc, char** argv) { return gaitmae::cli::run_cli(argc, argv); }
