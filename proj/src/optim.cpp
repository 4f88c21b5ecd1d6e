#include "gpg/optim.hpp"

#include <algorithm>
#include <cmath>

#include "gpg/errors.hpp"

namespace gpg {

namespace {

constexpr std::size_t kBlock = 256;

// Sum of per-trajectory vectors in index order, then scaled by 1/n. Blocks
// bound the memory held by per-trajectory slots.
template <class Fn>
GradVector ordered_mean(std::size_t n, std::size_t dim, Fn&& contribution, Exec exec) {
  GradVector total(dim);
  if (n == 0) return total;
  std::vector<GradVector> slots(std::min(n, kBlock));
  for (std::size_t base = 0; base < n; base += kBlock) {
    const std::size_t count = std::min(kBlock, n - base);
    parallel::for_each_index(
        count,
        [&](std::size_t k) {
          slots[k] = GradVector(dim);
          contribution(base + k, slots[k]);
        },
        exec);
    for (std::size_t k = 0; k < count; ++k) total += slots[k];
  }
  total *= 1.0 / static_cast<double>(n);
  return total;
}

void require_eps(double eps_clip) {
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) {
    throw ConfigError("eps_clip must lie in (0, 1), got " + std::to_string(eps_clip));
  }
}

void check_update(const ParamVector& params, const GradVector& grad, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw DomainError("learning rate must be positive and finite");
  if (grad.size() != params.size()) throw DomainError("gradient size does not match the parameters");
  if (!grad.all_finite()) throw NumericError("non-finite gradient; update refused");
}

double step_logprob(const std::vector<double>& lps, const MacroStep& step) {
  double s = 0.0;
  for (std::size_t t = step.start; t < step.end; ++t) s += lps[t];
  return s;
}

struct StepStats {
  std::vector<double> objective;  // per trajectory
  std::vector<std::size_t> clipped;
  std::vector<std::size_t> steps;
  std::vector<double> ratio_sum;
};

// Shared body of the clipped and unclipped surrogates. eps_clip < 0 means
// no clipping.
SurrogateResult surrogate(const ParamVector& params, const Batch& batch, double eps_clip, MacroPhiMode mode,
                          Exec exec) {
  batch.validate();
  const std::size_t n = batch.size();
  StepStats stats{std::vector<double>(n, 0.0), std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, 0),
                  std::vector<double>(n, 0.0)};
  SurrogateResult result;
  result.grad = ordered_mean(
      n, params.size(),
      [&](std::size_t i, GradVector& g) {
        const Trajectory& traj = batch.trajectories[i];
        if (traj.output.empty()) return;
        SequenceTape tape(params, traj.input, traj.output);
        std::vector<double> weights(traj.output.size(), 0.0);
        double obj = 0.0;
        for (const MacroStep& step : macro_steps(traj, batch.segmentations[i])) {
          const double a = macro_phi(batch.advantages, i, step, mode);
          const double r =
              std::exp(step_logprob(tape.logprobs(), step) - step_logprob(traj.behavior_logprobs, step));
          const double unclipped = r * a;
          double term = unclipped;
          bool clipped = false;
          if (eps_clip >= 0.0) {
            const double c = std::clamp(r, 1.0 - eps_clip, 1.0 + eps_clip) * a;
            if (c < unclipped) {
              term = c;
              clipped = true;
            }
          }
          obj += term;
          stats.ratio_sum[i] += r;
          stats.steps[i] += 1;
          if (clipped) {
            stats.clipped[i] += 1;
          } else {
            for (std::size_t t = step.start; t < step.end; ++t) weights[t] = a * r;
          }
        }
        stats.objective[i] = obj;
        tape.backward(weights, g);
      },
      exec);

  double objective = 0.0, ratio_sum = 0.0;
  std::size_t steps = 0, clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    objective += stats.objective[i];
    ratio_sum += stats.ratio_sum[i];
    steps += stats.steps[i];
    clipped += stats.clipped[i];
  }
  result.objective = n ? objective / static_cast<double>(n) : 0.0;
  result.report.loss = -result.objective;
  result.report.grad_norm = result.grad.norm();
  result.report.clip_fraction = steps ? static_cast<double>(clipped) / static_cast<double>(steps) : 0.0;
  result.report.mean_ratio = steps ? ratio_sum / static_cast<double>(steps) : 1.0;
  if (!std::isfinite(result.objective)) throw NumericError("non-finite surrogate objective");
  return result;
}

}  // namespace

void Batch::validate() const {
  const std::size_t n = trajectories.size();
  if (segmentations.size() != n) throw DomainError("batch needs one segmentation per trajectory");
  advantages.validate(trajectories);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = trajectories[i];
    segmentations[i].validate(t.output.size());
    if (t.behavior_logprobs.size() != t.output.size()) {
      throw DomainError("trajectory " + std::to_string(i) + " lacks behavior logprobs");
    }
  }
}

GradVector gpg_gradient(const ParamVector& params, const Batch& batch, MacroPhiMode mode, Exec exec) {
  if (batch.segmentations.size() != batch.size()) throw DomainError("batch needs one segmentation per trajectory");
  batch.advantages.validate(batch.trajectories);
  return ordered_mean(
      batch.size(), params.size(),
      [&](std::size_t i, GradVector& g) {
        const Trajectory& traj = batch.trajectories[i];
        if (traj.output.empty()) return;
        batch.segmentations[i].validate(traj.output.size());
        std::vector<double> weights(traj.output.size(), 0.0);
        for (const MacroStep& step : macro_steps(traj, batch.segmentations[i])) {
          const double phi = macro_phi(batch.advantages, i, step, mode);
          for (std::size_t t = step.start; t < step.end; ++t) weights[t] = phi;
        }
        SequenceTape(params, traj.input, traj.output).backward(weights, g);
      },
      exec);
}

GradVector token_pg_gradient(const ParamVector& params, const Batch& batch) {
  batch.advantages.validate(batch.trajectories);
  GradVector total(params.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& traj = batch.trajectories[i];
    GradVector g(params.size());
    TokenSeq prefix = traj.input;
    for (std::size_t t = 0; t < traj.output.size(); ++t) {
      const double phi = batch.advantages.per_token[i][t];
      if (phi != 0.0) g.axpy(phi, grad_logprob(params, prefix, traj.output[t]));
      prefix.push_back(traj.output[t]);
    }
    total += g;
  }
  if (batch.size()) total *= 1.0 / static_cast<double>(batch.size());
  return total;
}

double importance_ratio(const ParamVector& params, const ParamVector& old_params, std::span<const Token> macro_state,
                        std::span<const Token> macro_action) {
  return std::exp(macro_logprob(params, macro_state, macro_action) -
                  macro_logprob(old_params, macro_state, macro_action));
}

double clipped_term(double ratio, double advantage, double eps_clip) {
  require_eps(eps_clip);
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * advantage);
}

SurrogateResult clipped_surrogate(const ParamVector& params, const Batch& batch, double eps_clip, MacroPhiMode mode,
                                  Exec exec) {
  require_eps(eps_clip);
  return surrogate(params, batch, eps_clip, mode, exec);
}

SurrogateResult unclipped_surrogate(const ParamVector& params, const Batch& batch, MacroPhiMode mode, Exec exec) {
  return surrogate(params, batch, -1.0, mode, exec);
}

double grpo_objective(const ParamVector& params, const ParamVector& old_params, const std::vector<Trajectory>& group,
                      double eps_clip) {
  require_eps(eps_clip);
  if (group.empty()) return 0.0;
  std::vector<double> rewards;
  for (const auto& t : group) rewards.push_back(t.reward);
  const auto adv = init_advantages(rewards);
  double sum = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i].output.empty()) continue;
    const double r = importance_ratio(params, old_params, group[i].input, group[i].output);
    sum += clipped_term(r, adv[i], eps_clip);
  }
  return sum / static_cast<double>(group.size());
}

double kl_to_old(const ParamVector& params, const Batch& batch, Exec exec) {
  const std::size_t n = batch.size();
  std::vector<double> sums(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  parallel::for_each_index(
      n,
      [&](std::size_t i) {
        const Trajectory& traj = batch.trajectories[i];
        if (traj.output.empty()) return;
        SequenceTape tape(params, traj.input, traj.output);
        for (std::size_t t = 0; t < traj.output.size(); ++t) {
          const double log_r = tape.logprobs()[t] - traj.behavior_logprobs.at(t);
          sums[i] += std::expm1(log_r) - log_r;
        }
        counts[i] = traj.output.size();
      },
      exec);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += sums[i];
    count += counts[i];
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

void sgd_step(ParamVector& params, const GradVector& grad, double lr) {
  check_update(params, grad, lr);
  for (std::size_t k = 0; k < params.size(); ++k) params.values[k] += lr * grad.values[k];
}

AdamState AdamState::zeros(std::size_t n) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_step(AdamState& state, ParamVector& params, const GradVector& grad, const AdamConfig& config) {
  check_update(params, grad, config.lr);
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DomainError("Adam state size does not match the parameters");
  }
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0 &&
        config.eps > 0.0)) {
    throw ConfigError("Adam needs beta1, beta2 in [0, 1) and eps > 0");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grad.values[k];
    state.m[k] = config.beta1 * state.m[k] + (1.0 - config.beta1) * g;
    state.v[k] = config.beta2 * state.v[k] + (1.0 - config.beta2) * g * g;
    params.values[k] += config.lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + config.eps);
  }
}

}  // namespace gpg
