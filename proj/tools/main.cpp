#include "mnv2/cli.hpp"

int main(int argc, char** argv) { return mnv2::cli_main(argc, argv); }
