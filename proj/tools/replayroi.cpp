#include "replayroi/cli.hpp"

int main(int argc, char** argv) { return replayroi::cli::run(argc, argv); }
