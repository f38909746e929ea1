#include "hiermil/cli.hpp"

int main(int argc, char** argv) { return hiermil::cli::run(argc, argv); }
