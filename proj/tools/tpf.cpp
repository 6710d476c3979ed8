#include "tpf/cli.hpp"

int main(int argc, char** argv) { return tpf::cli::run(argc, argv); }
