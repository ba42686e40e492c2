#include "seqdistill/cli.hpp"

int main(int argc, char** argv) { return seqdistill::cli::run(argc, argv); }
