#include "topseg_cli/cli.hpp"

int main(int argc, char** argv) {
  return topseg::cli::run({argv + 1, argv + argc});
}
