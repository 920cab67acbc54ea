#include "commands.hpp"

int main(int argc, char** argv) { return fq::cli::run(argc, argv); }
