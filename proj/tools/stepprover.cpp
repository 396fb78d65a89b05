#include "stepprover/cli.hpp"

int main(int argc, char** argv) { return stepprover::cli::cli_dispatch(argc, argv); }
