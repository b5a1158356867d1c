#include "scihier/cli.hpp"

int main(int argc, char** argv) { return scihier::run_cli(argc, argv); }
