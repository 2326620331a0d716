#include "semd/cli.hpp"

int main(int argc, char** argv) { return semd::run_cli(argc, argv); }
