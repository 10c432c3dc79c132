#include "cli.hpp"

int main(int argc, char** argv) { return cosmix::cli::run_main(argc, argv); }
