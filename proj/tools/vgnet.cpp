#include <string>
#include <vector>

#include "vgnet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vgnet::cli::dispatch(args);
}
