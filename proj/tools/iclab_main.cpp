#include "iclab/harness.hpp"

int main(int argc, char** argv) { return iclab::harness::run_cli(argc, argv); }
