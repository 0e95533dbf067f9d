#include <vector>

#include "qkd/cli.hpp"

int main(int argc, char** argv) {
  return qkd::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
