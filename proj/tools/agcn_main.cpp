#include "agcn/cli.hpp"

int main(int argc, char** argv) { return agcn::cli_main(argc, argv); }
