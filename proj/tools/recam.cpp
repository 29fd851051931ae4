#include "recam/commands.hpp"

int main(int argc, char** argv) { return recam::cli::cli_main(argc, argv); }
