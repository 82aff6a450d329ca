#include "procsim/cli.hpp"

int main(int argc, char** argv) { return procsim::run(argc, argv); }
