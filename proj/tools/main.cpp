#include "cli.hpp"

int main(int argc, char** argv) { return bcg::cli_dispatch(argc, argv); }
