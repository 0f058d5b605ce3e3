#include "dwcaps/cli.hpp"

int main(int argc, char** argv) { return dwcaps::run_cli(argc, argv); }
