#include <vector>

#include "refaudit/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return refaudit::pipeline::cli_main(args);
}
