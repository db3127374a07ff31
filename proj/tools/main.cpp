#include "crt/cli.hpp"

int main(int argc, char** argv) { return crt::cli_main(argc, argv); }
