#pragma once

// Gradient estimators over macro-action segmentations and parameter updates.
// Every returned gradient is an ascent direction on the objective J.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gpg/credit.hpp"
#include "gpg/parallel.hpp"
#include "gpg/policy.hpp"
#include "gpg/segmentation.hpp"

namespace gpg {

inline constexpr double kDefaultEpsClip = 0.2;

struct Batch {
  std::vector<Trajectory> trajectories;
  std::vector<Segmentation> segmentations;
  AdvantageTable advantages;
  // Parameters the trajectories were sampled under. Behavior logprobs on the
  // trajectories are the ratio denominators.
  ParamVector old_params;

  /// Throws DomainError when segmentations, table rows or behavior logprobs
  /// do not match the trajectories.
  void validate() const;
  std::size_t size() const { return trajectories.size(); }
};

struct UpdateReport {
  double loss = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 1.0;
};

struct SurrogateResult {
  double objective = 0.0;
  GradVector grad;
  UpdateReport report;
};

/// Mean over trajectories of sum_T grad log pi(MA_T | MS_T) * Phi_T, with
/// Phi_T = macro_phi(advantages, i, step T, mode). Serial and Parallel give
/// bitwise identical results.
GradVector gpg_gradient(const ParamVector& params, const Batch& batch, MacroPhiMode mode = MacroPhiMode::Mean,
                        Exec exec = Exec::Parallel);

/// Per-token policy gradient: mean over trajectories of
/// sum_t Phi_t * grad_logprob(prefix_t, token_t), one token at a time.
GradVector token_pg_gradient(const ParamVector& params, const Batch& batch);

/// pi_theta(MA | MS) / pi_old(MA | MS).
double importance_ratio(const ParamVector& params, const ParamVector& old_params, std::span<const Token> macro_state,
                        std::span<const Token> macro_action);

/// The clipped term min(r A, clip(r, 1 - eps, 1 + eps) A).
double clipped_term(double ratio, double advantage, double eps_clip);

/// Mean over trajectories of sum_T clipped_term(r_T, Phi_T). Ratios use the
/// behavior logprobs as denominators. report.loss = -objective.
SurrogateResult clipped_surrogate(const ParamVector& params, const Batch& batch, double eps_clip,
                                  MacroPhiMode mode = MacroPhiMode::Mean, Exec exec = Exec::Parallel);
/// Mean over trajectories of sum_T r_T * Phi_T.
SurrogateResult unclipped_surrogate(const ParamVector& params, const Batch& batch,
                                    MacroPhiMode mode = MacroPhiMode::Mean, Exec exec = Exec::Parallel);

/// Sequence-level group objective computed directly from the group: mean_i
/// min(r_i A_i, clip(r_i) A_i) with r_i = pi(o_i | q) / pi_old(o_i | q) and
/// A_i group-normalized rewards.
double grpo_objective(const ParamVector& params, const ParamVector& old_params, const std::vector<Trajectory>& group,
                      double eps_clip);

/// Mean k3 estimate of KL(old || new) over all output tokens of the batch.
double kl_to_old(const ParamVector& params, const Batch& batch, Exec exec = Exec::Parallel);

/// params += lr * grad. Throws NumericError (params untouched) on a
/// non-finite gradient, DomainError when lr <= 0 or sizes differ.
void sgd_step(ParamVector& params, const GradVector& grad, double lr);

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  static AdamState zeros(std::size_t n);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam ascent step. Same errors as sgd_step.
void adam_step(AdamState& state, ParamVector& params, const GradVector& grad, const AdamConfig& config);

}  // namespace gpg
