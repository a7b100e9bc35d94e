#include "cli.hpp"

int main(int argc, char** argv) { return nucdiff::cli::run(argc, argv); }
