#include "cgan/cli.hpp"

int main(int argc, char** argv) { return cgan::run_cli(argc, argv); }
