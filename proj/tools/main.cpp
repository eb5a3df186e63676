#include "iog/cli.hpp"

int main(int argc, char** argv) { return iog::cli::main(argc, argv); }
