#include "pdd/cli/commands.hpp"

int main(int argc, char** argv) { return pdd::cli::main_entry(argc, argv); }
