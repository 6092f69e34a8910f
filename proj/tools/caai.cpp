#include "caai/cli.hpp"

int main(int argc, char** argv) { return caai::cli::run(argc, argv); }
