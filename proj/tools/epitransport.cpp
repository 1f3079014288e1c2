// CLI entry point; subcommands are registered in cli_impl.hpp.
#include <cstdio>

int main(int, char**) {
  std::fprintf(stderr, "error[internal]: CLI not wired yet\n");
  return 4;
}
