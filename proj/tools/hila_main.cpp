#include <string>
#include <vector>

#include "hila/harness/cli.hpp"

int main(int argc, char** argv) {
  return hila::harness::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
