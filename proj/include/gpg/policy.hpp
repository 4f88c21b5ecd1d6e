#pragma once

// Autoregressive token policies with exact reverse-mode gradients.
//
// Two backends share one parameter container:
//   * ContextTable: a dense logit table keyed on the last `c` tokens of the
//     prefix (left-padded with a BOS id equal to V).
//   * Attention: one causal self-attention layer (single head) with learned
//     token/positional embeddings, a tanh feed-forward block with residual
//     connections, and a linear read-out. No layer norm.
//
// All functions are pure in (params, inputs) and safe to call concurrently on
// a shared immutable ParamVector.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "gpg/rng.hpp"

namespace gpg {

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;

enum class Backend : std::uint32_t { ContextTable = 0, Attention = 1 };

/// Attention backend positional table size; prefixes (with the implicit BOS)
/// must fit.
inline constexpr std::size_t kMaxPositions = 64;

struct PolicyShape {
  Backend backend = Backend::ContextTable;
  std::uint32_t vocab = 3;
  // Context length c (table) or embedding width d (attention).
  std::uint32_t width = 2;

  std::uint32_t bos() const { return vocab; }
  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

PolicyShape table_shape(std::uint32_t vocab, std::uint32_t context = 2);
PolicyShape attention_shape(std::uint32_t vocab, std::uint32_t width = 16);

struct ParamVector {
  PolicyShape shape;
  std::vector<double> values;

  static ParamVector zeros(const PolicyShape& shape);
  /// Uniform in [-scale, scale].
  static ParamVector random(const PolicyShape& shape, std::uint64_t seed, double scale = 0.05);

  std::size_t size() const { return values.size(); }
  /// Checks length against the shape and that all values are finite.
  void validate() const;
};

struct GradVector {
  std::vector<double> values;

  GradVector() = default;
  explicit GradVector(std::size_t n) : values(n, 0.0) {}

  std::size_t size() const { return values.size(); }
  GradVector& operator+=(const GradVector& other);
  GradVector& operator*=(double s);
  void axpy(double a, const GradVector& x);
  double norm() const;
  bool all_finite() const;
};

struct Trajectory {
  TokenSeq input;
  TokenSeq output;
  std::vector<double> behavior_logprobs;
  // Decoding-time entropy of the distribution each output token was drawn from.
  std::vector<double> entropies;
  double reward = 0.0;
  bool terminated = false;
};

void check_tokens(std::span<const Token> tokens, std::uint32_t vocab);

std::vector<double> logits(const ParamVector& params, std::span<const Token> prefix);
double token_logprob(const ParamVector& params, std::span<const Token> prefix, Token token);
double sequence_logprob(const ParamVector& params, std::span<const Token> input,
                        std::span<const Token> output);
/// log pi(MA | MS) for a macro action continuing a macro state.
inline double macro_logprob(const ParamVector& params, std::span<const Token> macro_state,
                            std::span<const Token> macro_action) {
  return sequence_logprob(params, macro_state, macro_action);
}
double token_entropy(const ParamVector& params, std::span<const Token> prefix);

/// temperature 0 is greedy (ties to the lowest id).
Token sample_token(const ParamVector& params, std::span<const Token> prefix, Rng& rng,
                   double temperature = 1.0);

/// Generate until `eos` or `horizon` tokens. Reward is left at 0.
Trajectory rollout(const ParamVector& params, std::span<const Token> input, std::size_t horizon,
                   Token eos, Rng& rng, double temperature = 1.0);
/// Keep the first `keep` output tokens of `stem` (with their recorded
/// logprobs/entropies) and generate the rest to EOS/horizon.
Trajectory continue_rollout(const ParamVector& params, const Trajectory& stem, std::size_t keep,
                            std::size_t horizon, Token eos, Rng& rng, double temperature = 1.0);

GradVector grad_logprob(const ParamVector& params, std::span<const Token> prefix, Token token);
GradVector grad_macro_logprob(const ParamVector& params, std::span<const Token> macro_state,
                              std::span<const Token> macro_action);

// ---------------------------------------------------------------------------
// Sequence tape: one causal forward pass over `context ++ targets`, then a
// single weighted backward pass. This is the kernel every estimator uses.
// ---------------------------------------------------------------------------

namespace detail {
struct TableTape {
  std::vector<std::size_t> rows;  // table row used for each target
  std::vector<double> probs;      // n x V softmax
};
struct AttentionTape;  // defined in attention.cpp
struct AttentionTapeHandle {
  std::shared_ptr<const AttentionTape> impl;
};
}  // namespace detail

class SequenceTape {
 public:
  SequenceTape(const ParamVector& params, std::span<const Token> context,
               std::span<const Token> targets);

  /// log pi(targets[i] | context ++ targets[:i]).
  const std::vector<double>& logprobs() const { return logprobs_; }
  double total_logprob() const;

  /// grad += sum_i weights[i] * d logprobs[i] / d theta.
  void backward(std::span<const double> weights, GradVector& grad) const;

 private:
  const ParamVector* params_;
  std::vector<Token> targets_;
  std::vector<double> logprobs_;
  std::variant<detail::TableTape, detail::AttentionTapeHandle> tape_;
};

}  // namespace gpg
