#include <string>
#include <vector>

#include "blcf/cli.hpp"

int main(int argc, char** argv) {
  return blcf::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
