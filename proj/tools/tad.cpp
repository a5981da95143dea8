#include "tad/segment.hpp"

#include <cstdio>

int main() {
  std::puts("tad: subcommands not wired yet");
  return 0;
}
