#include "devias/cli.hpp"

int main(int argc, char** argv) { return devias::cli::run(argc, argv); }
