#include "commands.hpp"

int main(int argc, char** argv) { return rsyn::cli::run(argc, argv); }
