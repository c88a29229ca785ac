#include "maot/cli.hpp"

int main(int argc, char** argv) { return maot::cli::run(argc, argv); }
