// Causal single-head attention policy: forward pass and hand-written reverse
// mode. Row-major d x d matrices act as y = W x.

#include <algorithm>
#include <cmath>
#include <string>

#include "gpg/errors.hpp"
#include "policy_backends.hpp"

namespace gpg::detail {

AttentionLayout attention_layout(const PolicyShape& shape) {
  AttentionLayout l{};
  l.d = shape.width;
  l.vocab = shape.vocab;
  l.rows = shape.vocab + 1;
  const std::size_t dd = l.d * l.d;
  l.emb = 0;
  l.pos = l.emb + l.rows * l.d;
  l.wq = l.pos + kMaxPositions * l.d;
  l.wk = l.wq + dd;
  l.wv = l.wk + dd;
  l.wo = l.wv + dd;
  l.w1 = l.wo + dd;
  l.b1 = l.w1 + dd;
  l.w2 = l.b1 + l.d;
  l.out = l.w2 + dd;
  l.out_bias = l.out + l.vocab * l.d;
  l.total = l.out_bias + l.vocab;
  return l;
}

namespace {

// out = W x
inline void matvec(const double* w, const double* x, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t a = 0; a < rows; ++a) {
    double s = 0.0;
    const double* wr = w + a * cols;
    for (std::size_t b = 0; b < cols; ++b) s += wr[b] * x[b];
    out[a] = s;
  }
}

// out += W^T g
inline void matvec_t_add(const double* w, const double* g, double* out, std::size_t rows,
                         std::size_t cols) {
  for (std::size_t a = 0; a < rows; ++a) {
    const double ga = g[a];
    if (ga == 0.0) continue;
    const double* wr = w + a * cols;
    for (std::size_t b = 0; b < cols; ++b) out[b] += wr[b] * ga;
  }
}

// dW += g x^T
inline void outer_add(double* dw, const double* g, const double* x, std::size_t rows, std::size_t cols) {
  for (std::size_t a = 0; a < rows; ++a) {
    const double ga = g[a];
    if (ga == 0.0) continue;
    double* dr = dw + a * cols;
    for (std::size_t b = 0; b < cols; ++b) dr[b] += ga * x[b];
  }
}

// Forward over `seq`, producing activations for positions [first, seq.size()).
// Returned logits (npred x V) are raw, not normalized.
std::shared_ptr<AttentionTape> run(const ParamVector& params, std::vector<Token> seq, std::size_t first,
                                   std::vector<double>& logits_out) {
  const AttentionLayout L = attention_layout(params.shape);
  const std::size_t d = L.d;
  const std::size_t len = seq.size();
  if (len > kMaxPositions) {
    throw DomainError("attention prefix length " + std::to_string(len) + " exceeds " +
                      std::to_string(kMaxPositions) + " positions");
  }
  const double* w = params.values.data();
  auto tape = std::make_shared<AttentionTape>();
  tape->first = first;
  tape->len = len;
  const std::size_t npred = len - first;

  tape->x.assign(len * d, 0.0);
  tape->k.assign(len * d, 0.0);
  tape->v.assign(len * d, 0.0);
  for (std::size_t j = 0; j < len; ++j) {
    double* xj = &tape->x[j * d];
    const double* e = w + L.emb + seq[j] * d;
    const double* p = w + L.pos + j * d;
    for (std::size_t a = 0; a < d; ++a) xj[a] = e[a] + p[a];
    matvec(w + L.wk, xj, &tape->k[j * d], d, d);
    matvec(w + L.wv, xj, &tape->v[j * d], d, d);
  }

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  tape->q.assign(npred * d, 0.0);
  tape->h.assign(npred * d, 0.0);
  tape->r.assign(npred * d, 0.0);
  tape->z.assign(npred * d, 0.0);
  tape->y.assign(npred * d, 0.0);
  tape->attn.assign(npred * len, 0.0);
  logits_out.assign(npred * L.vocab, 0.0);
  std::vector<double> o(d), u(d), f(d);

  for (std::size_t i = 0; i < npred; ++i) {
    const std::size_t p = first + i;
    const double* xp = &tape->x[p * d];
    double* q = &tape->q[i * d];
    matvec(w + L.wq, xp, q, d, d);

    double* a = &tape->attn[i * len];
    double max = -INFINITY;
    for (std::size_t j = 0; j <= p; ++j) {
      double s = 0.0;
      const double* kj = &tape->k[j * d];
      for (std::size_t c = 0; c < d; ++c) s += q[c] * kj[c];
      a[j] = s * inv_sqrt_d;
      max = std::max(max, a[j]);
    }
    if (!std::isfinite(max)) throw NumericError("non-finite attention score");
    double sum = 0.0;
    for (std::size_t j = 0; j <= p; ++j) {
      a[j] = std::exp(a[j] - max);
      sum += a[j];
    }
    for (std::size_t j = 0; j <= p; ++j) a[j] /= sum;

    double* h = &tape->h[i * d];
    for (std::size_t j = 0; j <= p; ++j) {
      const double* vj = &tape->v[j * d];
      for (std::size_t c = 0; c < d; ++c) h[c] += a[j] * vj[c];
    }
    matvec(w + L.wo, h, o.data(), d, d);
    double* r = &tape->r[i * d];
    for (std::size_t c = 0; c < d; ++c) r[c] = xp[c] + o[c];
    matvec(w + L.w1, r, u.data(), d, d);
    double* z = &tape->z[i * d];
    for (std::size_t c = 0; c < d; ++c) z[c] = std::tanh(u[c] + w[L.b1 + c]);
    matvec(w + L.w2, z, f.data(), d, d);
    double* y = &tape->y[i * d];
    for (std::size_t c = 0; c < d; ++c) y[c] = r[c] + f[c];
    double* lg = &logits_out[i * L.vocab];
    matvec(w + L.out, y, lg, L.vocab, d);
    for (std::size_t c = 0; c < L.vocab; ++c) lg[c] += w[L.out_bias + c];
  }
  tape->seq = std::move(seq);
  return tape;
}

}  // namespace

std::vector<double> attention_next_logits(const ParamVector& params, std::span<const Token> prefix) {
  std::vector<Token> seq;
  seq.reserve(prefix.size() + 1);
  seq.push_back(params.shape.bos());
  seq.insert(seq.end(), prefix.begin(), prefix.end());
  const std::size_t first = seq.size() - 1;
  std::vector<double> lg;
  run(params, std::move(seq), first, lg);
  return lg;
}

std::shared_ptr<const AttentionTape> attention_forward(const ParamVector& params,
                                                       std::span<const Token> context,
                                                       std::span<const Token> targets,
                                                       std::vector<double>& logprobs) {
  const std::size_t vocab = params.shape.vocab;
  std::vector<Token> seq;
  seq.reserve(context.size() + targets.size() + 1);
  seq.push_back(params.shape.bos());
  seq.insert(seq.end(), context.begin(), context.end());
  if (!targets.empty()) seq.insert(seq.end(), targets.begin(), targets.end() - 1);
  const std::size_t first = context.size();
  logprobs.assign(targets.size(), 0.0);
  if (targets.empty()) {
    auto empty = std::make_shared<AttentionTape>();
    empty->seq = std::move(seq);
    empty->first = first;
    empty->len = empty->seq.size();
    return empty;
  }
  std::vector<double> lg;
  auto tape = run(params, std::move(seq), first, lg);
  tape->probs.resize(lg.size());
  std::vector<double> row(vocab);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    std::copy_n(lg.begin() + static_cast<std::ptrdiff_t>(i * vocab), vocab, row.begin());
    log_softmax_inplace(row);
    for (std::size_t c = 0; c < vocab; ++c) tape->probs[i * vocab + c] = std::exp(row[c]);
    logprobs[i] = row[targets[i]];
  }
  return tape;
}

void attention_backward(const ParamVector& params, const AttentionTape& tape,
                        std::span<const Token> targets, std::span<const double> weights,
                        GradVector& grad) {
  if (targets.empty()) return;
  const AttentionLayout L = attention_layout(params.shape);
  const std::size_t d = L.d;
  const std::size_t len = tape.len;
  const double* w = params.values.data();
  double* g = grad.values.data();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<double> dx(len * d, 0.0), dk(len * d, 0.0), dv(len * d, 0.0);
  std::vector<double> dl(L.vocab), dy(d), dz(d), du(d), dr(d), dh(d), dq(d), da(len);

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double wt = weights[i];
    if (wt == 0.0) continue;
    const std::size_t p = tape.first + i;
    const double* probs = &tape.probs[i * L.vocab];
    const double* y = &tape.y[i * d];
    const double* z = &tape.z[i * d];
    const double* r = &tape.r[i * d];
    const double* h = &tape.h[i * d];
    const double* q = &tape.q[i * d];
    const double* a = &tape.attn[i * len];
    const double* xp = &tape.x[p * d];

    for (std::size_t c = 0; c < L.vocab; ++c) dl[c] = wt * ((c == targets[i] ? 1.0 : 0.0) - probs[c]);
    for (std::size_t c = 0; c < L.vocab; ++c) g[L.out_bias + c] += dl[c];
    outer_add(g + L.out, dl.data(), y, L.vocab, d);
    std::fill(dy.begin(), dy.end(), 0.0);
    matvec_t_add(w + L.out, dl.data(), dy.data(), L.vocab, d);

    // y = r + W2 tanh(W1 r + b1)
    outer_add(g + L.w2, dy.data(), z, d, d);
    std::fill(dz.begin(), dz.end(), 0.0);
    matvec_t_add(w + L.w2, dy.data(), dz.data(), d, d);
    for (std::size_t c = 0; c < d; ++c) du[c] = dz[c] * (1.0 - z[c] * z[c]);
    outer_add(g + L.w1, du.data(), r, d, d);
    for (std::size_t c = 0; c < d; ++c) g[L.b1 + c] += du[c];
    dr = dy;
    matvec_t_add(w + L.w1, du.data(), dr.data(), d, d);

    // r = x_p + Wo h
    for (std::size_t c = 0; c < d; ++c) dx[p * d + c] += dr[c];
    outer_add(g + L.wo, dr.data(), h, d, d);
    std::fill(dh.begin(), dh.end(), 0.0);
    matvec_t_add(w + L.wo, dr.data(), dh.data(), d, d);

    // h = sum_j a_j v_j, a = softmax(q . k_j / sqrt(d))
    double mean = 0.0;
    for (std::size_t j = 0; j <= p; ++j) {
      const double* vj = &tape.v[j * d];
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        s += dh[c] * vj[c];
        dv[j * d + c] += a[j] * dh[c];
      }
      da[j] = s;
      mean += a[j] * s;
    }
    std::fill(dq.begin(), dq.end(), 0.0);
    for (std::size_t j = 0; j <= p; ++j) {
      const double ds = a[j] * (da[j] - mean) * inv_sqrt_d;
      if (ds == 0.0) continue;
      const double* kj = &tape.k[j * d];
      for (std::size_t c = 0; c < d; ++c) {
        dq[c] += ds * kj[c];
        dk[j * d + c] += ds * q[c];
      }
    }
    outer_add(g + L.wq, dq.data(), xp, d, d);
    matvec_t_add(w + L.wq, dq.data(), &dx[p * d], d, d);
  }

  for (std::size_t j = 0; j < len; ++j) {
    const double* xj = &tape.x[j * d];
    outer_add(g + L.wk, &dk[j * d], xj, d, d);
    matvec_t_add(w + L.wk, &dk[j * d], &dx[j * d], d, d);
    outer_add(g + L.wv, &dv[j * d], xj, d, d);
    matvec_t_add(w + L.wv, &dv[j * d], &dx[j * d], d, d);
    double* ge = g + L.emb + tape.seq[j] * d;
    double* gp = g + L.pos + j * d;
    for (std::size_t c = 0; c < d; ++c) {
      ge[c] += dx[j * d + c];
      gp[c] += dx[j * d + c];
    }
  }
}

}  // namespace gpg::detail
