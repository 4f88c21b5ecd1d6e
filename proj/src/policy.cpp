#include "gpg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gpg/errors.hpp"
#include "policy_backends.hpp"

namespace gpg {

namespace detail {

void log_softmax_inplace(std::vector<double>& values) {
  double max = -INFINITY;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite logit");
    max = std::max(max, v);
  }
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max);
  const double lse = max + std::log(sum);
  for (double& v : values) v -= lse;
}

std::size_t table_row(const PolicyShape& shape, std::span<const Token> prefix) {
  const std::size_t base = shape.vocab + 1;
  const std::size_t c = shape.width;
  std::size_t row = 0;
  for (std::size_t i = 0; i < c; ++i) {
    // Window slot i holds prefix[len - c + i], or BOS when that is before the start.
    const std::size_t back = c - i;
    const Token tok = prefix.size() >= back ? prefix[prefix.size() - back] : shape.bos();
    row = row * base + tok;
  }
  return row;
}

}  // namespace detail

// --- shapes & containers ----------------------------------------------------

PolicyShape table_shape(std::uint32_t vocab, std::uint32_t context) {
  PolicyShape s{Backend::ContextTable, vocab, context};
  s.validate();
  return s;
}

PolicyShape attention_shape(std::uint32_t vocab, std::uint32_t width) {
  PolicyShape s{Backend::Attention, vocab, width};
  s.validate();
  return s;
}

void PolicyShape::validate() const {
  if (vocab < 2) throw DomainError("vocab size must be >= 2");
  switch (backend) {
    case Backend::ContextTable: {
      if (width > 8) throw DomainError("context length must be <= 8");
      double rows = std::pow(static_cast<double>(vocab) + 1.0, width);
      if (rows * vocab > 5e7) throw DomainError("context table too large");
      break;
    }
    case Backend::Attention:
      if (width == 0 || width > 256) throw DomainError("embedding width must be in [1, 256]");
      break;
    default:
      throw DomainError("unknown backend id " + std::to_string(static_cast<std::uint32_t>(backend)));
  }
}

std::size_t PolicyShape::param_count() const {
  if (backend == Backend::Attention) return detail::attention_layout(*this).total;
  std::size_t rows = 1;
  for (std::uint32_t i = 0; i < width; ++i) rows *= vocab + 1;
  return rows * vocab;
}

ParamVector ParamVector::zeros(const PolicyShape& shape) {
  shape.validate();
  return ParamVector{shape, std::vector<double>(shape.param_count(), 0.0)};
}

ParamVector ParamVector::random(const PolicyShape& shape, std::uint64_t seed, double scale) {
  ParamVector p = zeros(shape);
  Rng rng(seed);
  for (double& v : p.values) v = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

void ParamVector::validate() const {
  shape.validate();
  if (values.size() != shape.param_count()) {
    throw DomainError("parameter count " + std::to_string(values.size()) + " does not match shape (" +
                      std::to_string(shape.param_count()) + ")");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite parameter");
  }
}

GradVector& GradVector::operator+=(const GradVector& other) {
  if (other.size() != size()) throw DomainError("gradient size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
  return *this;
}

GradVector& GradVector::operator*=(double s) {
  for (double& v : values) v *= s;
  return *this;
}

void GradVector::axpy(double a, const GradVector& x) {
  if (x.size() != size()) throw DomainError("gradient size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += a * x.values[i];
}

double GradVector::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

bool GradVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void check_tokens(std::span<const Token> tokens, std::uint32_t vocab) {
  for (Token t : tokens) {
    if (t >= vocab) {
      throw DomainError("token id " + std::to_string(t) + " out of range for vocab " +
                        std::to_string(vocab));
    }
  }
}

// --- single-step queries -----------------------------------------------------

std::vector<double> logits(const ParamVector& params, std::span<const Token> prefix) {
  check_tokens(prefix, params.shape.vocab);
  if (params.shape.backend == Backend::Attention) return detail::attention_next_logits(params, prefix);
  const std::size_t vocab = params.shape.vocab;
  const std::size_t row = detail::table_row(params.shape, prefix);
  auto first = params.values.begin() + static_cast<std::ptrdiff_t>(row * vocab);
  return {first, first + static_cast<std::ptrdiff_t>(vocab)};
}

double token_logprob(const ParamVector& params, std::span<const Token> prefix, Token token) {
  check_tokens({&token, 1}, params.shape.vocab);
  auto lp = logits(params, prefix);
  detail::log_softmax_inplace(lp);
  return lp[token];
}

double sequence_logprob(const ParamVector& params, std::span<const Token> input,
                        std::span<const Token> output) {
  if (output.empty()) {
    check_tokens(input, params.shape.vocab);
    return 0.0;
  }
  return SequenceTape(params, input, output).total_logprob();
}

namespace {

double entropy_of_logprobs(const std::vector<double>& lp) {
  double h = 0.0;
  for (double l : lp) {
    const double p = std::exp(l);
    if (p > 0.0) h -= p * l;
  }
  return std::max(h, 0.0);
}

Token argmax_lowest(const std::vector<double>& values) {
  Token best = 0;
  for (Token i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Token draw(const std::vector<double>& lg, Rng& rng, double temperature) {
  if (temperature < 0.0 || !std::isfinite(temperature)) throw DomainError("temperature must be >= 0");
  if (temperature == 0.0) return argmax_lowest(lg);
  std::vector<double> scaled(lg.size());
  for (std::size_t i = 0; i < lg.size(); ++i) scaled[i] = lg[i] / temperature;
  detail::log_softmax_inplace(scaled);
  const double u = rng.uniform();
  double cum = 0.0;
  Token last_nonzero = 0;
  for (Token i = 0; i < scaled.size(); ++i) {
    const double p = std::exp(scaled[i]);
    if (p > 0.0) last_nonzero = i;
    cum += p;
    if (u < cum) return i;
  }
  return last_nonzero;
}

void extend(const ParamVector& params, const TokenSeq& input, Trajectory& traj,
            std::size_t horizon, Token eos, Rng& rng, double temperature) {
  TokenSeq prefix = input;
  prefix.insert(prefix.end(), traj.output.begin(), traj.output.end());
  traj.terminated = !traj.output.empty() && traj.output.back() == eos;
  while (!traj.terminated && traj.output.size() < horizon) {
    auto lg = logits(params, prefix);
    const Token tok = draw(lg, rng, temperature);
    detail::log_softmax_inplace(lg);
    traj.output.push_back(tok);
    traj.behavior_logprobs.push_back(lg[tok]);
    traj.entropies.push_back(entropy_of_logprobs(lg));
    prefix.push_back(tok);
    traj.terminated = tok == eos;
  }
}

}  // namespace

double token_entropy(const ParamVector& params, std::span<const Token> prefix) {
  auto lp = logits(params, prefix);
  detail::log_softmax_inplace(lp);
  return entropy_of_logprobs(lp);
}

Token sample_token(const ParamVector& params, std::span<const Token> prefix, Rng& rng,
                   double temperature) {
  return draw(logits(params, prefix), rng, temperature);
}

Trajectory rollout(const ParamVector& params, std::span<const Token> input, std::size_t horizon,
                   Token eos, Rng& rng, double temperature) {
  if (horizon == 0) throw DomainError("horizon must be >= 1");
  check_tokens(input, params.shape.vocab);
  Trajectory traj;
  traj.input.assign(input.begin(), input.end());
  extend(params, traj.input, traj, horizon, eos, rng, temperature);
  return traj;
}

Trajectory continue_rollout(const ParamVector& params, const Trajectory& stem, std::size_t keep,
                            std::size_t horizon, Token eos, Rng& rng, double temperature) {
  if (keep > stem.output.size()) throw DomainError("continuation point beyond output");
  Trajectory traj;
  traj.input = stem.input;
  traj.output.assign(stem.output.begin(), stem.output.begin() + static_cast<std::ptrdiff_t>(keep));
  traj.behavior_logprobs.assign(stem.behavior_logprobs.begin(),
                                stem.behavior_logprobs.begin() + static_cast<std::ptrdiff_t>(keep));
  traj.entropies.assign(stem.entropies.begin(),
                        stem.entropies.begin() + static_cast<std::ptrdiff_t>(keep));
  extend(params, traj.input, traj, horizon, eos, rng, temperature);
  return traj;
}

GradVector grad_logprob(const ParamVector& params, std::span<const Token> prefix, Token token) {
  GradVector g(params.size());
  const double one = 1.0;
  SequenceTape(params, prefix, {&token, 1}).backward({&one, 1}, g);
  return g;
}

GradVector grad_macro_logprob(const ParamVector& params, std::span<const Token> macro_state,
                              std::span<const Token> macro_action) {
  GradVector g(params.size());
  if (macro_action.empty()) return g;
  const std::vector<double> ones(macro_action.size(), 1.0);
  SequenceTape(params, macro_state, macro_action).backward(ones, g);
  return g;
}

// --- tape ----------------------------------------------------------------------

SequenceTape::SequenceTape(const ParamVector& params, std::span<const Token> context,
                           std::span<const Token> targets)
    : params_(&params), targets_(targets.begin(), targets.end()) {
  const std::uint32_t vocab = params.shape.vocab;
  check_tokens(context, vocab);
  check_tokens(targets, vocab);
  if (params.values.size() != params.shape.param_count()) {
    throw DomainError("parameter vector does not match its shape");
  }
  if (params.shape.backend == Backend::Attention) {
    tape_ = detail::AttentionTapeHandle{detail::attention_forward(params, context, targets, logprobs_)};
    return;
  }
  detail::TableTape tape;
  std::vector<Token> seq(context.begin(), context.end());
  seq.insert(seq.end(), targets.begin(), targets.end());
  tape.rows.resize(targets.size());
  tape.probs.resize(targets.size() * vocab);
  logprobs_.resize(targets.size());
  std::vector<double> lp(vocab);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t row =
        detail::table_row(params.shape, std::span<const Token>(seq).first(context.size() + i));
    std::copy_n(params.values.begin() + static_cast<std::ptrdiff_t>(row * vocab), vocab, lp.begin());
    detail::log_softmax_inplace(lp);
    tape.rows[i] = row;
    for (std::size_t u = 0; u < vocab; ++u) tape.probs[i * vocab + u] = std::exp(lp[u]);
    logprobs_[i] = lp[targets[i]];
  }
  tape_ = std::move(tape);
}

double SequenceTape::total_logprob() const {
  return std::accumulate(logprobs_.begin(), logprobs_.end(), 0.0);
}

void SequenceTape::backward(std::span<const double> weights, GradVector& grad) const {
  if (weights.size() != targets_.size()) throw DomainError("one weight per target token required");
  if (grad.size() != params_->size()) throw DomainError("gradient size mismatch");
  if (const auto* handle = std::get_if<detail::AttentionTapeHandle>(&tape_)) {
    detail::attention_backward(*params_, *handle->impl, targets_, weights, grad);
    return;
  }
  const auto& tape = std::get<detail::TableTape>(tape_);
  const std::size_t vocab = params_->shape.vocab;
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    double* row = grad.values.data() + tape.rows[i] * vocab;
    const double* p = tape.probs.data() + i * vocab;
    for (std::size_t u = 0; u < vocab; ++u) {
      row[u] += w * ((u == targets_[i] ? 1.0 : 0.0) - p[u]);
    }
  }
}

}  // namespace gpg
