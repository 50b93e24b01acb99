#include "ringqkd/cli.hpp"

int main(int argc, char** argv) { return ringqkd::cli_main(argc, argv); }
