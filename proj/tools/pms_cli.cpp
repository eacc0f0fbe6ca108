#include "pms/cli/commands.hpp"

int main(int argc, char** argv) { return pms::cli::run_cli(argc, argv); }
