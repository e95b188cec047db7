#include "tabrec/cli.hpp"

int main(int argc, char** argv) { return tabrec::run_cli(argc, argv); }
