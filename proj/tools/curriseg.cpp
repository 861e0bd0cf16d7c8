#include "curriseg/cli.hpp"

int main(int argc, char** argv) { return curriseg::cli::run(argc, argv); }
