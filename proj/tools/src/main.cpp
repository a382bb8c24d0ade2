#include <iostream>

#include "audiomod/cli/commands.hpp"
#include "audiomod/parallel.hpp"

int main(int argc, char** argv) {
  audiomod::tune_allocator();
  return audiomod::cli::run(argc, argv, std::cout, std::cerr);
}
