#include "ibcaan/cli.hpp"

int main(int argc, char** argv) { return ibcaan::cli_main(argc, argv); }
