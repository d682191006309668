#include "klmc/cli.hpp"

int main(int argc, char** argv) { return klmc::run_cli(argc, argv); }
