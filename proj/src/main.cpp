#include <vector>

#include "uapt/cli.hpp"

int main(int argc, char** argv) {
  return uapt::cli_dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
