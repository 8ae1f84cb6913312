#include "deepdust/cli.hpp"

int main(int argc, char** argv) { return deepdust::cli::run(argc, argv); }
