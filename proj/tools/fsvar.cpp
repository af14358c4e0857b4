#include "cli.hpp"

int main(int argc, char** argv) { return fsvar::cli::run_cli(argc, argv); }
