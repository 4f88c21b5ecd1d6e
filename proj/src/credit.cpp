#include "gpg/credit.hpp"

#include <cmath>

#include "gpg/errors.hpp"

namespace gpg {

void AdvantageTable::validate(const std::vector<Trajectory>& group) const {
  if (per_token.size() != group.size()) throw DomainError("advantage table has the wrong trajectory count");
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (per_token[i].size() != group[i].output.size()) {
      throw DomainError("advantage row " + std::to_string(i) + " does not match its output length");
    }
    for (double v : per_token[i]) {
      if (!std::isfinite(v)) throw NumericError("non-finite advantage");
    }
  }
}

PhiMode parse_phi(const std::string& text) {
  if (text == "total") return PhiMode::Total;
  if (text == "rtg") return PhiMode::RewardToGo;
  if (text == "baselined") return PhiMode::Baselined;
  if (text == "grpo") return PhiMode::Grpo;
  if (text == "calibrated") return PhiMode::Calibrated;
  throw ConfigError("unknown phi '" + text + "' (expected total, rtg, baselined, grpo or calibrated)");
}

std::string to_string(PhiMode mode) {
  switch (mode) {
    case PhiMode::Total: return "total";
    case PhiMode::RewardToGo: return "rtg";
    case PhiMode::Baselined: return "baselined";
    case PhiMode::Grpo: return "grpo";
    case PhiMode::Calibrated: return "calibrated";
  }
  return "?";
}

MacroPhiMode parse_macro_phi(const std::string& text) {
  if (text == "first_token") return MacroPhiMode::FirstToken;
  if (text == "mean") return MacroPhiMode::Mean;
  throw ConfigError("unknown macro credit mode '" + text + "' (expected first_token or mean)");
}

GroupStats group_stats(std::span<const double> rewards) {
  if (rewards.empty()) throw DomainError("group statistics of an empty group");
  GroupStats s;
  s.size = rewards.size();
  double sum = 0.0;
  for (double r : rewards) sum += r;
  s.mean = sum / static_cast<double>(s.size);
  double sq = 0.0;
  for (double r : rewards) sq += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(s.size));
  return s;
}

std::vector<double> init_advantages(std::span<const double> rewards, double eps) {
  const GroupStats s = group_stats(rewards);
  std::vector<double> out(rewards.size(), 0.0);
  if (s.std <= eps) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - s.mean) / s.std;
  return out;
}

AdvantageTable calibrate(const SharingSets& sets, std::span<const double> init_advs) {
  if (sets.set_of.size() != init_advs.size()) throw DomainError("one initial advantage per leaf required");
  std::vector<double> set_mean(sets.members.size(), 0.0);
  for (std::size_t id = 0; id < sets.members.size(); ++id) {
    const auto& m = sets.members[id];
    if (m.empty()) continue;
    double sum = 0.0;
    for (std::size_t j : m) sum += init_advs[j];
    set_mean[id] = sum / static_cast<double>(m.size());
  }
  AdvantageTable table;
  table.initial.assign(init_advs.begin(), init_advs.end());
  table.per_token.resize(sets.set_of.size());
  for (std::size_t i = 0; i < sets.set_of.size(); ++i) {
    for (std::size_t id : sets.set_of[i]) table.per_token[i].push_back(set_mean[id]);
  }
  return table;
}

std::vector<double> phi_total_reward(const Trajectory& traj) {
  return std::vector<double>(traj.output.size(), traj.reward);
}

std::vector<double> phi_reward_to_go(std::span<const double> per_step_rewards) {
  std::vector<double> out(per_step_rewards.size());
  double acc = 0.0;
  for (std::size_t i = per_step_rewards.size(); i-- > 0;) {
    acc += per_step_rewards[i];
    out[i] = acc;
  }
  return out;
}

std::vector<double> phi_baselined(std::span<const double> reward_to_go, std::span<const double> baseline) {
  if (reward_to_go.size() != baseline.size()) throw DomainError("baseline length mismatch");
  std::vector<double> out(reward_to_go.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = reward_to_go[i] - baseline[i];
  return out;
}

std::vector<double> terminal_rewards(const Trajectory& traj) {
  std::vector<double> r(traj.output.size(), 0.0);
  if (!r.empty()) r.back() = traj.reward;
  return r;
}

double macro_phi(std::span<const double> credits, const MacroStep& step, MacroPhiMode mode,
                 bool require_constant) {
  if (step.start >= step.end || step.end > credits.size()) {
    throw DomainError("macro step [" + std::to_string(step.start) + ", " + std::to_string(step.end) +
                      ") outside a credit row of length " + std::to_string(credits.size()));
  }
  if (require_constant) {
    for (std::size_t t = step.start + 1; t < step.end; ++t) {
      if (credits[t] != credits[step.start]) {
        throw DomainError("credit is not constant within macro step starting at " + std::to_string(step.start));
      }
    }
  }
  if (mode == MacroPhiMode::FirstToken) return credits[step.start];
  double sum = 0.0;
  for (std::size_t t = step.start; t < step.end; ++t) sum += credits[t];
  return sum / static_cast<double>(step.length());
}

double macro_phi(const AdvantageTable& table, std::size_t traj, const MacroStep& step, MacroPhiMode mode,
                 bool require_constant) {
  if (traj >= table.per_token.size()) throw DomainError("trajectory index outside the advantage table");
  return macro_phi(table.per_token[traj], step, mode, require_constant);
}

AdvantageTable credit_table(const std::vector<Trajectory>& group, PhiMode mode, double eps) {
  AdvantageTable table;
  if (group.empty()) return table;
  std::vector<double> rewards;
  rewards.reserve(group.size());
  for (const auto& t : group) rewards.push_back(t.reward);

  switch (mode) {
    case PhiMode::Total:
      for (const auto& t : group) table.per_token.push_back(phi_total_reward(t));
      break;
    case PhiMode::RewardToGo:
      for (const auto& t : group) table.per_token.push_back(phi_reward_to_go(terminal_rewards(t)));
      break;
    case PhiMode::Baselined: {
      const double mean = group_stats(rewards).mean;
      for (const auto& t : group) {
        const std::vector<double> b(t.output.size(), mean);
        table.per_token.push_back(phi_baselined(phi_reward_to_go(terminal_rewards(t)), b));
      }
      break;
    }
    case PhiMode::Grpo:
      table.initial = init_advantages(rewards, eps);
      for (std::size_t i = 0; i < group.size(); ++i) {
        table.per_token.emplace_back(group[i].output.size(), table.initial[i]);
      }
      break;
    case PhiMode::Calibrated:
      table = calibrate(sharing_sets_of(group), init_advantages(rewards, eps));
      break;
  }
  return table;
}

}  // namespace gpg
