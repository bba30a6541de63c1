#include "cli.hpp"

int main(int argc, char** argv) { return geounet::cli::run(argc, argv); }
