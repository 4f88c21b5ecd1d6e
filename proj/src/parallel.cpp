#include "gpg/parallel.hpp"

#include <cstdlib>
#include <string>

#include "gpg/errors.hpp"

namespace gpg::parallel {

namespace {
#if defined(_OPENMP)
const int kDefaultThreads = omp_get_max_threads();
#endif
}  // namespace

void set_threads(int n) {
#if defined(_OPENMP)
  omp_set_num_threads(n > 0 ? n : kDefaultThreads);
#else
  (void)n;
#endif
}

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int configure_from_env() {
  if (const char* env = std::getenv("GPG_THREADS"); env != nullptr && *env != '\0') {
    int n = 0;
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("GPG_THREADS must be a non-negative integer, got '") + env + "'");
    }
    if (n < 0) throw ConfigError("GPG_THREADS must be >= 0");
    set_threads(n);
  }
  return max_threads();
}

}  // namespace gpg::parallel
