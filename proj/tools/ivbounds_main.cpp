#include "ivbounds/cli.hpp"

int main(int argc, char** argv) { return ivbounds::cli::run(argc, argv); }
