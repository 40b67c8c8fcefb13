#include "m3dvg/cli.hpp"

int main(int argc, char** argv) { return m3dvg::cli::run(argc, argv); }
