#include "mtur/cli.hpp"

int main(int argc, char** argv) { return mtur::cli::run(argc, argv); }
