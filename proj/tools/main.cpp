#include <string>
#include <vector>

#include "rppg/cli.hpp"

int main(int argc, char** argv) {
  return rppg::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
