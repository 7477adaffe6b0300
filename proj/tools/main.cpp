#include <vector>
#include <string>

#include "qfiga/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return qfiga::cli_run(args);
}
