#pragma once

// OpenMP work distribution with results that do not depend on the number of
// workers: every index writes its own slot, and reductions run over fixed
// chunks that are combined in index order.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace gpg {

enum class Exec { Serial, Parallel };

namespace parallel {

/// 0 restores the OpenMP default.
void set_threads(int n);
int max_threads();
/// Applies GPG_THREADS if set (0 = auto). Returns the resulting worker count.
int configure_from_env();

inline constexpr std::size_t kChunk = 64;

/// Calls fn(i) for i in [0, n). Exceptions are rethrown on the caller.
template <class Fn>
void for_each_index(std::size_t n, Fn&& fn, Exec exec = Exec::Parallel) {
  if (exec == Exec::Serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::once_flag once;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::call_once(once, [&] { error = std::current_exception(); });
    }
  }
  if (error) std::rethrow_exception(error);
}

/// sum over i of the `dim`-vector that fn(i, acc) adds into acc.
/// Serial: one accumulator in index order. Parallel: fixed kChunk-sized
/// partial sums combined in chunk order, so the result is independent of
/// the worker count (but may differ from Serial in the last bits).
template <class Fn>
std::vector<double> chunked_sum(std::size_t n, std::size_t dim, Fn&& fn, Exec exec = Exec::Parallel) {
  std::vector<double> total(dim, 0.0);
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i, total);
    return total;
  }
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(chunks);
  for_each_index(chunks, [&](std::size_t c) {
    std::vector<double> acc(dim, 0.0);
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) fn(i, acc);
    partial[c] = std::move(acc);
  });
  for (const auto& p : partial) {
    for (std::size_t k = 0; k < dim; ++k) total[k] += p[k];
  }
  return total;
}

}  // namespace parallel
}  // namespace gpg
