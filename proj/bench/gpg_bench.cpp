#include <cstdio>
#include <cstdlib>

#include "gpg/bench.hpp"
#include "gpg/parallel.hpp"

int main(int argc, char** argv) {
  gpg::parallel::configure_from_env();
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
  std::fputs(gpg::format_bench(gpg::run_benchmarks(repeats > 0 ? repeats : 3)).c_str(), stdout);
  return 0;
}
