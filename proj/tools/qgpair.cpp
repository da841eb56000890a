#include <iostream>

#include "qgraph/cli/app.hpp"

int main(int argc, char** argv) { return qgraph::cli::qgpair_main(argc, argv, std::cout, std::cerr); }
