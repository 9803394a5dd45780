#include "fepagent/cli.hpp"

int main(int argc, char** argv) { return fep::cli::dispatch(argc, argv); }
