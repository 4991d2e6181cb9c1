#include "dcreg/cli.hpp"

int main(int argc, char** argv) { return dcreg::cli::run(argc, argv); }
