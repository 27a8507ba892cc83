#include "csud/cli.hpp"

int main(int argc, char** argv) { return csud::cli::run(argc, argv); }
