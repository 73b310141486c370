#include "quadrec/cli.hpp"

int main(int argc, char** argv) { return quadrec::cli::run(argc, argv); }
