#include "tarot/cli.hpp"

int main(int argc, char** argv) { return tarot::run_cli(argc, argv); }
