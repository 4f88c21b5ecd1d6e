#pragma once

// Credit signals Phi: total reward, reward-to-go, baselined reward-to-go,
// group-normalized advantages and prefix-calibrated token advantages.

#include <cstddef>
#include <string>
#include <vector>

#include "gpg/beam.hpp"
#include "gpg/segmentation.hpp"

namespace gpg {

inline constexpr double kAdvantageEps = 1e-8;

struct GroupStats {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t size = 0;
};

struct AdvantageTable {
  std::vector<std::vector<double>> per_token;  // [trajectory][output position]
  std::vector<double> initial;                 // A_i^init; empty when not applicable

  /// Throws DomainError on shape mismatch with the group, NumericError on
  /// non-finite entries.
  void validate(const std::vector<Trajectory>& group) const;
};

enum class PhiMode { Total, RewardToGo, Baselined, Grpo, Calibrated };
PhiMode parse_phi(const std::string& text);
std::string to_string(PhiMode mode);

enum class MacroPhiMode { FirstToken, Mean };
MacroPhiMode parse_macro_phi(const std::string& text);

GroupStats group_stats(std::span<const double> rewards);
/// (r_i - mean) / std, or all zeros when std <= eps.
std::vector<double> init_advantages(std::span<const double> rewards, double eps = kAdvantageEps);
/// A_t for leaf i = mean of A_j^init over j in S_t.
AdvantageTable calibrate(const SharingSets& sets, std::span<const double> init_advs);

std::vector<double> phi_total_reward(const Trajectory& traj);
std::vector<double> phi_reward_to_go(std::span<const double> per_step_rewards);
std::vector<double> phi_baselined(std::span<const double> reward_to_go, std::span<const double> baseline);
/// Terminal-only rewards: zeros with R(tau) on the last position.
std::vector<double> terminal_rewards(const Trajectory& traj);

/// Credit of one macro step. `require_constant` asserts equal values across
/// the step (DomainError otherwise).
double macro_phi(std::span<const double> credits, const MacroStep& step, MacroPhiMode mode,
                 bool require_constant = false);
double macro_phi(const AdvantageTable& table, std::size_t traj, const MacroStep& step, MacroPhiMode mode,
                 bool require_constant = false);

/// Per-token credit table for one advantage group under `mode`. The baseline
/// of the baselined mode is the group mean reward.
AdvantageTable credit_table(const std::vector<Trajectory>& group, PhiMode mode, double eps = kAdvantageEps);

}  // namespace gpg
