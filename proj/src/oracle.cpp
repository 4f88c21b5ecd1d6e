#include "gpg/oracle.hpp"

#include <cmath>
#include <limits>

#include "gpg/errors.hpp"

namespace gpg {

namespace {

// (V-1)^H, saturating.
std::uint64_t branching(std::uint32_t vocab, std::size_t horizon) {
  std::uint64_t out = 1;
  const std::uint64_t base = vocab - 1;
  for (std::size_t i = 0; i < horizon; ++i) {
    if (base != 0 && out > std::numeric_limits<std::uint64_t>::max() / base) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    out *= base;
  }
  return out;
}

void extend(const TrajectorySpace& s, TokenSeq& prefix, std::vector<TokenSeq>& out) {
  if (prefix.size() == s.horizon) {
    out.push_back(prefix);
    return;
  }
  for (Token t = 0; t < s.vocab; ++t) {
    prefix.push_back(t);
    if (t == s.eos) {
      out.push_back(prefix);
    } else {
      extend(s, prefix, out);
    }
    prefix.pop_back();
  }
}

Trajectory scored(const TaskSpec& task, const TokenSeq& input, const TokenSeq& output) {
  Trajectory t;
  t.input = input;
  t.output = output;
  t.terminated = !output.empty() && output.back() == task.eos;
  score(task, t);
  return t;
}

bool needs_entropies(const Segmenter& s) {
  return s.kind == Segmenter::Kind::Entropy || s.kind == Segmenter::Kind::EntropyQuantile;
}

}  // namespace

std::uint64_t space_size(std::uint32_t vocab, std::size_t horizon) {
  std::uint64_t total = 0;
  for (std::size_t l = 0; l < horizon; ++l) total += branching(vocab, l);
  return total + branching(vocab, horizon);
}

TrajectorySpace enumerate_space(std::uint32_t vocab, Token eos, std::size_t horizon, std::uint64_t cap) {
  if (vocab < 2) throw DomainError("enumeration needs V >= 2");
  if (eos >= vocab) throw DomainError("eos id must be < V");
  const std::uint64_t need = branching(vocab, horizon);
  if (need > cap) {
    throw ResourceError("trajectory space too large: (V-1)^H = " + std::to_string(need) + " exceeds cap " +
                        std::to_string(cap) + "; rerun with a cap of at least " + std::to_string(need));
  }
  TrajectorySpace s{vocab, eos, horizon, {}};
  s.outputs.reserve(space_size(vocab, horizon));
  TokenSeq prefix;
  extend(s, prefix, s.outputs);
  return s;
}

double traj_prob(const ParamVector& params, std::span<const Token> input, std::span<const Token> output) {
  return std::exp(sequence_logprob(params, input, output));
}

double exact_objective(const ParamVector& params, const TaskSpec& task, const TokenSeq& input, std::size_t horizon,
                       std::uint64_t cap, Exec exec) {
  const TrajectorySpace space = enumerate_space(task.vocab, task.eos, horizon, cap);
  const auto sum = parallel::chunked_sum(
      space.size(), 1,
      [&](std::size_t i, std::vector<double>& acc) {
        const double r = verify_reward(task, input, space.outputs[i]).total;
        if (r != 0.0) acc[0] += traj_prob(params, input, space.outputs[i]) * r;
      },
      exec);
  return sum[0];
}

GradientCheck exact_gradient_check(const ParamVector& params, const TaskSpec& task, const TokenSeq& input,
                                   std::size_t horizon, std::uint64_t cap, double rel, double abs_floor, Exec exec) {
  const TrajectorySpace space = enumerate_space(task.vocab, task.eos, horizon, cap);
  GradientCheck check;
  check.likelihood_ratio.values = parallel::chunked_sum(
      space.size(), params.size(),
      [&](std::size_t i, std::vector<double>& acc) {
        const TokenSeq& out = space.outputs[i];
        const double r = verify_reward(task, input, out).total;
        if (r == 0.0 || out.empty()) return;
        SequenceTape tape(params, input, out);
        const std::vector<double> w(out.size(), std::exp(tape.total_logprob()) * r);
        GradVector g;
        g.values.swap(acc);
        tape.backward(w, g);
        g.values.swap(acc);
      },
      exec);

  // Finite differences: one objective pair per component, components in parallel.
  const std::size_t n = params.size();
  check.finite_difference = GradVector(n);
  parallel::for_each_index(
      n,
      [&](std::size_t k) {
        ParamVector probe = params;
        probe.values[k] = params.values[k] + kFiniteDifferenceStep;
        const double up = exact_objective(probe, task, input, horizon, cap, Exec::Serial);
        probe.values[k] = params.values[k] - kFiniteDifferenceStep;
        const double down = exact_objective(probe, task, input, horizon, cap, Exec::Serial);
        check.finite_difference.values[k] = (up - down) / (2.0 * kFiniteDifferenceStep);
      },
      exec);

  for (std::size_t k = 0; k < n; ++k) {
    const double a = check.likelihood_ratio.values[k];
    const double b = check.finite_difference.values[k];
    const double tol = std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
    check.worst_excess = std::max(check.worst_excess, std::abs(a - b) / tol);
  }
  return check;
}

GradVector exact_gradient(const ParamVector& params, const TaskSpec& task, const TokenSeq& input, std::size_t horizon,
                          std::uint64_t cap, Exec exec) {
  GradientCheck check = exact_gradient_check(params, task, input, horizon, cap, 1e-6, 1e-9, exec);
  if (!(check.worst_excess <= 1.0)) {
    throw NumericError("exact gradient routes disagree: worst discrepancy is " +
                       std::to_string(check.worst_excess) + "x the tolerance");
  }
  return std::move(check.likelihood_ratio);
}

MacroCredit credit_total_reward() {
  return [](const Trajectory& t, const std::vector<MacroStep>& steps) {
    return std::vector<double>(steps.size(), t.reward);
  };
}

MacroCredit credit_baselined(std::function<double(const TokenSeq&)> baseline) {
  return [baseline = std::move(baseline)](const Trajectory& t, const std::vector<MacroStep>& steps) {
    std::vector<double> out;
    out.reserve(steps.size());
    for (const auto& step : steps) out.push_back(t.reward - baseline(macro_state(t, step)));
    return out;
  };
}

GradVector exact_gpg_expectation(const ParamVector& params, const TaskSpec& task, const TokenSeq& input,
                                 std::size_t horizon, const Segmenter& segmenter, const MacroCredit& credit,
                                 std::uint64_t cap, Exec exec) {
  const TrajectorySpace space = enumerate_space(task.vocab, task.eos, horizon, cap);
  GradVector out;
  out.values = parallel::chunked_sum(
      space.size(), params.size(),
      [&](std::size_t i, std::vector<double>& acc) {
        const TokenSeq& output = space.outputs[i];
        if (output.empty()) return;
        Trajectory traj = scored(task, input, output);
        if (needs_entropies(segmenter)) {
          TokenSeq prefix = input;
          for (Token t : output) {
            traj.entropies.push_back(token_entropy(params, prefix));
            prefix.push_back(t);
          }
        }
        const Segmentation seg = segmenter(traj);
        const auto steps = macro_steps(traj, seg);
        const auto phi = credit(traj, steps);
        if (phi.size() != steps.size()) throw DomainError("macro credit must give one value per step");
        // Each macro step is its own conditional pi(MA_T | MS_T), evaluated
        // with MS_T as context.
        const double p = traj_prob(params, input, output);
        GradVector g;
        g.values.swap(acc);
        for (std::size_t s = 0; s < steps.size(); ++s) {
          const double w = p * phi[s];
          if (w == 0.0) continue;
          SequenceTape tape(params, macro_state(traj, steps[s]), macro_action(traj, steps[s]));
          tape.backward(std::vector<double>(steps[s].length(), w), g);
        }
        g.values.swap(acc);
      },
      exec);
  return out;
}

}  // namespace gpg
