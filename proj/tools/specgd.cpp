#include "specgd/cli.hpp"

int main(int argc, char** argv) { return specgd::cli::run(argc, argv); }
