#include <iostream>

#include "sparsnn/io/pipeline.hpp"

int main(int argc, char** argv) { return sparsnn::run_cli(argc, argv, std::cout, std::cerr); }
