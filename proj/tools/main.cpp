#include "cli.hpp"

int main(int argc, char** argv) { return phylosmc::cli::run(argc, argv); }
