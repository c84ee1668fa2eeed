#include "sbp/cli.hpp"

int main(int argc, char** argv) { return sbp::run_cli(argc, argv); }
