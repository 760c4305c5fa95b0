#include "swinq/cli/cli.hpp"

int main(int argc, char** argv) { return swinq::cli_main(argc, argv); }
