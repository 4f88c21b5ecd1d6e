#pragma once

// Serial reference kernels against their OpenMP versions.

#include <string>
#include <vector>

namespace gpg {

struct BenchResult {
  std::string kernel;
  double serial_ms = 0.0;
  double parallel_ms = 0.0;
  int threads = 1;
  double max_abs_diff = 0.0;  // serial vs parallel output
};

/// Best of `repeats` wall-clock timings per kernel and execution mode.
std::vector<BenchResult> run_benchmarks(int repeats = 3);
std::string format_bench(const std::vector<BenchResult>& results);

}  // namespace gpg
