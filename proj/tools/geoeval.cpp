#include "geoeval/cli.hpp"

int main(int argc, char** argv) { return geoeval::cli::dispatch(argc, argv); }
