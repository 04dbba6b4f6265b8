#include "loupe/cli.hpp"

#include <vector>

int main(int argc, char** argv) {
  return loupe::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
