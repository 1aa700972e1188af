#include "sflda/cli.hpp"

int main(int argc, char** argv) { return sflda::cli::run(argc, argv); }
