#include "rfit/cli.hpp"

int main(int argc, char** argv) {
  return rfit::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
