#include "was/cli.hpp"

int main(int argc, char** argv) { return was::cli::cli_main(argc, argv); }
