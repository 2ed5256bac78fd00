#include "fracheat/cli.hpp"

int main(int argc, char** argv) { return fracheat::cli::main(argc, argv); }
