#include "saemvs/cli.hpp"

int main(int argc, char** argv) { return saemvs::cli::run(argc, argv); }
