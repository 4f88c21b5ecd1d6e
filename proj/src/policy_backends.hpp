#pragma once

#include <memory>
#include <span>
#include <vector>

#include "gpg/policy.hpp"

namespace gpg::detail {

/// In place: logits -> log-softmax via shifted logsumexp. Throws NumericError
/// on non-finite input.
void log_softmax_inplace(std::vector<double>& values);

std::size_t table_row(const PolicyShape& shape, std::span<const Token> prefix);

struct AttentionLayout {
  std::size_t d, vocab, rows;  // rows = vocab + 1 (BOS)
  std::size_t emb, pos, wq, wk, wv, wo, w1, b1, w2, out, out_bias, total;
};
AttentionLayout attention_layout(const PolicyShape& shape);

struct AttentionTape {
  std::vector<Token> seq;  // BOS ++ context ++ targets[:-1]
  std::size_t first;       // position predicting targets[0]
  std::size_t len;
  std::vector<double> x, k, v;          // len x d
  std::vector<double> q, h, r, z, y;    // n x d, one per predicting position
  std::vector<double> attn;             // n x len (row i valid for j <= first + i)
  std::vector<double> probs;            // n x V
};

std::vector<double> attention_next_logits(const ParamVector& params, std::span<const Token> prefix);
std::shared_ptr<const AttentionTape> attention_forward(const ParamVector& params,
                                                       std::span<const Token> context,
                                                       std::span<const Token> targets,
                                                       std::vector<double>& logprobs);
void attention_backward(const ParamVector& params, const AttentionTape& tape,
                        std::span<const Token> targets, std::span<const double> weights,
                        GradVector& grad);

}  // namespace gpg::detail
