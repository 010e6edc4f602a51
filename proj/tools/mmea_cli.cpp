#include "mmea/cli.hpp"

int main(int argc, char** argv) { return mmea::run_cli(argc, argv); }
