// Command-line front end for the verification laboratory.  All logic lives in
// the header so the test suite can drive the same entry point in-process.

#include <iostream>
#include <string>
#include <vector>

#include "kglab/lab.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return kglab::run_lab(args, std::cout, std::cerr);
}
