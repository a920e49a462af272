#include "servoscope/cli.hpp"

int main(int argc, char** argv) { return servoscope::cli::run_command(argc, argv); }
