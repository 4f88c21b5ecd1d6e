#pragma once

// Exact expectations over the complete trajectory space of small instances.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "gpg/env.hpp"
#include "gpg/parallel.hpp"
#include "gpg/policy.hpp"
#include "gpg/segmentation.hpp"

namespace gpg {

inline constexpr std::uint64_t kDefaultEnumerationCap = 200000;
inline constexpr double kFiniteDifferenceStep = 1e-6;

/// Every admissible output: EOS-terminated sequences of length <= H with no
/// interior EOS, plus all EOS-free sequences of length H. Lexicographic.
struct TrajectorySpace {
  std::uint32_t vocab = 0;
  Token eos = 0;
  std::size_t horizon = 0;
  std::vector<TokenSeq> outputs;

  std::size_t size() const { return outputs.size(); }
};

/// sum_{l<H} (V-1)^l + (V-1)^H.
std::uint64_t space_size(std::uint32_t vocab, std::size_t horizon);

/// ResourceError (stating the required cap) when (V-1)^H exceeds `cap`.
TrajectorySpace enumerate_space(std::uint32_t vocab, Token eos, std::size_t horizon,
                                std::uint64_t cap = kDefaultEnumerationCap);

double traj_prob(const ParamVector& params, std::span<const Token> input, std::span<const Token> output);

/// J = sum_tau P(tau) R(tau) over outputs of length up to `horizon`.
double exact_objective(const ParamVector& params, const TaskSpec& task, const TokenSeq& input, std::size_t horizon,
                       std::uint64_t cap = kDefaultEnumerationCap, Exec exec = Exec::Parallel);

struct GradientCheck {
  GradVector likelihood_ratio;  // sum_tau P grad log P R
  GradVector finite_difference; // central differences of exact_objective
  double worst_excess = 0.0;    // max over k of |lr - fd| / tolerance_k; <= 1 means agreement
};

/// Both routes to grad J. Agreement: |lr - fd| <= max(abs_floor, rel * max(|lr|, |fd|)).
GradientCheck exact_gradient_check(const ParamVector& params, const TaskSpec& task, const TokenSeq& input,
                                   std::size_t horizon, std::uint64_t cap = kDefaultEnumerationCap,
                                   double rel = 1e-6, double abs_floor = 1e-9, Exec exec = Exec::Parallel);

/// The likelihood-ratio gradient after the finite-difference cross-check.
/// NumericError if the two routes disagree.
GradVector exact_gradient(const ParamVector& params, const TaskSpec& task, const TokenSeq& input, std::size_t horizon,
                          std::uint64_t cap = kDefaultEnumerationCap, Exec exec = Exec::Parallel);

/// Credit Phi_T for each macro step of an enumerated trajectory (reward set).
using MacroCredit = std::function<std::vector<double>(const Trajectory&, const std::vector<MacroStep>&)>;

/// Phi_T = R(tau) for every step.
MacroCredit credit_total_reward();
/// Phi_T = R(tau) - b(MS_T).
MacroCredit credit_baselined(std::function<double(const TokenSeq& macro_state)> baseline);

/// sum_tau P(tau) sum_T Phi_T grad log pi(MA_T | MS_T), with the segmenter
/// applied to each enumerated trajectory (entropies filled in from params).
GradVector exact_gpg_expectation(const ParamVector& params, const TaskSpec& task, const TokenSeq& input,
                                 std::size_t horizon, const Segmenter& segmenter,
                                 const MacroCredit& credit = credit_total_reward(),
                                 std::uint64_t cap = kDefaultEnumerationCap, Exec exec = Exec::Parallel);

}  // namespace gpg
