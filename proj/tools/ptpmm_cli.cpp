#include "ptpmm/harness.hpp"

int main(int argc, char** argv) { return ptpmm::cli_main(argc, argv); }
