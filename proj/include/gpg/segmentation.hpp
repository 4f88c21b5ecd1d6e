#pragma once

// Macro-action segmentation of trajectory outputs.
//
// A Segmentation lists the exclusive end index of each macro action; the
// first macro action starts at output index 0 and the last boundary equals
// the output length. Macro state i is input ++ output[0 : start_i].

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "gpg/policy.hpp"

namespace gpg {

struct Segmentation {
  std::vector<std::size_t> boundaries;

  std::size_t K() const { return boundaries.size(); }
  /// Throws DomainError unless boundaries strictly increase and end at len.
  void validate(std::size_t output_len) const;
  bool has_boundary(std::size_t pos) const;

  friend bool operator==(const Segmentation&, const Segmentation&) = default;
};

struct MacroStep {
  std::size_t state_len;  // input length + output tokens before this step
  std::size_t start;      // output index range [start, end)
  std::size_t end;

  std::size_t length() const { return end - start; }
};

Segmentation segment_full(const Trajectory& traj);
Segmentation segment_tokens(const Trajectory& traj);
/// Boundary right after every marker occurrence, plus the final boundary.
Segmentation segment_markers(const Trajectory& traj, const std::set<Token>& markers);
/// Boundary after every token whose entropy exceeds `threshold`.
Segmentation segment_entropy(const Trajectory& traj, std::span<const double> entropies, double threshold);
/// Boundary after the ceil(fraction * n) highest-entropy tokens (ties to the
/// earlier position).
Segmentation segment_entropy_quantile(const Trajectory& traj, std::span<const double> entropies,
                                      double fraction);
/// K near-equal contiguous segments, longer ones first.
Segmentation segment_fixed(const Trajectory& traj, std::size_t K);
/// Each interior position is a boundary with probability 1/2.
Segmentation segment_random(const Trajectory& traj, Rng& rng);

std::vector<MacroStep> macro_steps(const Trajectory& traj, const Segmentation& seg);

/// macro state tokens (input ++ output[:step.start]) and macro action tokens.
TokenSeq macro_state(const Trajectory& traj, const MacroStep& step);
TokenSeq macro_action(const Trajectory& traj, const MacroStep& step);

/// A configured strategy, as selected by `segmentation = ...`.
struct Segmenter {
  enum class Kind { Full, Tokens, Markers, Entropy, EntropyQuantile, Fixed, Random };

  Kind kind = Kind::Full;
  std::set<Token> markers;
  double threshold = 0.5;
  double quantile = 0.25;
  std::size_t k = 1;
  std::uint64_t seed = 0;

  /// full | tokens | markers | entropy | entropy_quantile | fixed(K) | random
  static Segmenter parse(const std::string& text);
  std::string name() const;

  /// Entropy strategies read traj.entropies. fixed(K) uses min(K, |output|)
  /// segments; random is seeded from (seed, trajectory content) so the same
  /// trajectory always gets the same partition. Empty outputs give K = 0.
  Segmentation operator()(const Trajectory& traj) const;
};

}  // namespace gpg
