#include "iod/cli.hpp"

int main(int argc, char** argv) { return iod::cli::run(argc, argv); }
