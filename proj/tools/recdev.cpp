#include "recdev/cli.hpp"

int main(int argc, char** argv) { return recdev::cli::run(argc, argv); }
