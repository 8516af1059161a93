#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "stkd/cli/app.hpp"

int main(int argc, char** argv) {
  // Keep large activation buffers on the heap between batches.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  std::vector<std::string> args(argv + 1, argv + argc);
  return stkd::cli::run(args, std::cout, std::cerr);
}
