#include "resdit/cli/commands.hpp"

int main(int argc, char** argv) { return resdit::cli::main(argc, argv); }
