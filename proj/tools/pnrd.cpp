#include "pnrd/cli.hpp"

int main(int argc, char** argv) { return pnrd::cli::run(argc, argv); }
