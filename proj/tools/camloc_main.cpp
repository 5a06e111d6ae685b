#include "camloc/cli.hpp"

int main(int argc, char** argv) { return camloc::cli::run_cli(argc, argv); }
