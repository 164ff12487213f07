#include "mboot/cli.hpp"

int main(int argc, char** argv) { return mboot::cli::run(argc, argv); }
