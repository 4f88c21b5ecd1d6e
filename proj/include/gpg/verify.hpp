#pragma once

// Verification checks behind `gpg verify` and the acceptance binary. Each
// check compares two independent computations and reports a verdict with
// the measured discrepancy.

#include <cstdint>
#include <string>
#include <vector>

#include "gpg/oracle.hpp"

namespace gpg {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t cap = kDefaultEnumerationCap;
  std::uint64_t seed = 20240917;
  std::size_t draws = 10;
  std::size_t rollouts = 50000;
  std::size_t fd_cases = 100;
};

CheckResult check_gpg_theorem(const VerifyOptions& opt);
CheckResult check_baseline_invariance(const VerifyOptions& opt);
CheckResult check_normalization(const VerifyOptions& opt);
CheckResult check_unbiasedness(const VerifyOptions& opt);
CheckResult check_gradient_fd(const VerifyOptions& opt);
CheckResult check_exact_gradient_routes(const VerifyOptions& opt);
CheckResult check_token_reduction(const VerifyOptions& opt);
CheckResult check_grpo_reduction(const VerifyOptions& opt);
CheckResult check_on_policy(const VerifyOptions& opt);
CheckResult check_calibration(const VerifyOptions& opt);

/// gpg | unbias | calib | grad
const std::vector<std::string>& suite_names();
/// Throws ConfigError for an unknown suite.
std::vector<CheckResult> run_suite(const std::string& suite, const VerifyOptions& opt);

}  // namespace gpg
