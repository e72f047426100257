#include "defnet/cli.hpp"

int main(int argc, char** argv) { return defnet::cli_main(argc, argv); }
