#include "steerq/cli.hpp"

int main(int argc, char** argv) { return steerq::cli::run(argc, argv); }
