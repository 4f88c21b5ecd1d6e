#include "gpg/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gpg/errors.hpp"

namespace gpg {

namespace {

void require_output(const Trajectory& traj) {
  if (traj.output.empty()) throw DomainError("segmentation requires a non-empty output");
}

void close_last(Segmentation& seg, std::size_t len) {
  if (seg.boundaries.empty() || seg.boundaries.back() != len) seg.boundaries.push_back(len);
}

}  // namespace

void Segmentation::validate(std::size_t output_len) const {
  if (boundaries.empty()) {
    if (output_len == 0) return;
    throw DomainError("segmentation has no boundaries");
  }
  std::size_t prev = 0;
  for (std::size_t b : boundaries) {
    if (b <= prev) throw DomainError("segmentation boundaries must strictly increase from 0");
    prev = b;
  }
  if (boundaries.back() != output_len) throw DomainError("last boundary must equal the output length");
}

bool Segmentation::has_boundary(std::size_t pos) const {
  return std::binary_search(boundaries.begin(), boundaries.end(), pos);
}

Segmentation segment_full(const Trajectory& traj) {
  require_output(traj);
  return Segmentation{{traj.output.size()}};
}

Segmentation segment_tokens(const Trajectory& traj) {
  require_output(traj);
  Segmentation seg;
  seg.boundaries.resize(traj.output.size());
  std::iota(seg.boundaries.begin(), seg.boundaries.end(), std::size_t{1});
  return seg;
}

Segmentation segment_markers(const Trajectory& traj, const std::set<Token>& markers) {
  require_output(traj);
  Segmentation seg;
  for (std::size_t i = 0; i < traj.output.size(); ++i) {
    if (markers.count(traj.output[i])) seg.boundaries.push_back(i + 1);
  }
  close_last(seg, traj.output.size());
  return seg;
}

Segmentation segment_entropy(const Trajectory& traj, std::span<const double> entropies, double threshold) {
  require_output(traj);
  if (entropies.size() != traj.output.size()) throw DomainError("one entropy per output token required");
  Segmentation seg;
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    if (entropies[i] > threshold) seg.boundaries.push_back(i + 1);
  }
  close_last(seg, traj.output.size());
  return seg;
}

Segmentation segment_entropy_quantile(const Trajectory& traj, std::span<const double> entropies,
                                      double fraction) {
  require_output(traj);
  if (entropies.size() != traj.output.size()) throw DomainError("one entropy per output token required");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DomainError("quantile fraction must be in [0, 1]");
  const std::size_t n = entropies.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return entropies[a] > entropies[b]; });
  const auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  Segmentation seg;
  for (std::size_t i = 0; i < std::min(take, n); ++i) seg.boundaries.push_back(order[i] + 1);
  std::sort(seg.boundaries.begin(), seg.boundaries.end());
  close_last(seg, n);
  return seg;
}

Segmentation segment_fixed(const Trajectory& traj, std::size_t K) {
  const std::size_t n = traj.output.size();
  if (K < 1 || K > n) {
    throw DomainError("fixed segmentation needs 1 <= K <= " + std::to_string(n) + ", got " + std::to_string(K));
  }
  Segmentation seg;
  const std::size_t base = n / K, extra = n % K;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < K; ++i) {
    pos += base + (i < extra ? 1 : 0);
    seg.boundaries.push_back(pos);
  }
  return seg;
}

Segmentation segment_random(const Trajectory& traj, Rng& rng) {
  require_output(traj);
  Segmentation seg;
  for (std::size_t i = 1; i < traj.output.size(); ++i) {
    if (rng.next() & 1U) seg.boundaries.push_back(i);
  }
  seg.boundaries.push_back(traj.output.size());
  return seg;
}

std::vector<MacroStep> macro_steps(const Trajectory& traj, const Segmentation& seg) {
  seg.validate(traj.output.size());
  std::vector<MacroStep> steps;
  steps.reserve(seg.K());
  std::size_t start = 0;
  std::size_t state = traj.input.size();
  for (std::size_t b : seg.boundaries) {
    steps.push_back({state, start, b});
    state += b - start;
    start = b;
  }
  return steps;
}

TokenSeq macro_state(const Trajectory& traj, const MacroStep& step) {
  TokenSeq s = traj.input;
  s.insert(s.end(), traj.output.begin(), traj.output.begin() + static_cast<std::ptrdiff_t>(step.start));
  return s;
}

TokenSeq macro_action(const Trajectory& traj, const MacroStep& step) {
  return {traj.output.begin() + static_cast<std::ptrdiff_t>(step.start),
          traj.output.begin() + static_cast<std::ptrdiff_t>(step.end)};
}

Segmenter Segmenter::parse(const std::string& text) {
  Segmenter s;
  if (text == "full") {
    s.kind = Kind::Full;
  } else if (text == "tokens") {
    s.kind = Kind::Tokens;
  } else if (text == "markers") {
    s.kind = Kind::Markers;
  } else if (text == "entropy") {
    s.kind = Kind::Entropy;
  } else if (text == "entropy_quantile") {
    s.kind = Kind::EntropyQuantile;
  } else if (text == "random") {
    s.kind = Kind::Random;
  } else if (text.rfind("fixed(", 0) == 0 && text.size() > 7 && text.back() == ')') {
    s.kind = Kind::Fixed;
    const std::string digits = text.substr(6, text.size() - 7);
    try {
      std::size_t used = 0;
      const long k = std::stol(digits, &used);
      if (used != digits.size() || k < 1) throw std::invalid_argument("");
      s.k = static_cast<std::size_t>(k);
    } catch (const std::exception&) {
      throw ConfigError("fixed(K) needs a positive integer K, got '" + text + "'");
    }
  } else {
    throw ConfigError("unknown segmentation '" + text +
                      "' (expected full, tokens, markers, entropy, entropy_quantile, fixed(K) or random)");
  }
  return s;
}

std::string Segmenter::name() const {
  switch (kind) {
    case Kind::Full: return "full";
    case Kind::Tokens: return "tokens";
    case Kind::Markers: return "markers";
    case Kind::Entropy: return "entropy";
    case Kind::EntropyQuantile: return "entropy_quantile";
    case Kind::Fixed: return "fixed(" + std::to_string(k) + ")";
    case Kind::Random: return "random";
  }
  return "?";
}

Segmentation Segmenter::operator()(const Trajectory& traj) const {
  if (traj.output.empty()) return {};
  switch (kind) {
    case Kind::Full: return segment_full(traj);
    case Kind::Tokens: return segment_tokens(traj);
    case Kind::Markers: return segment_markers(traj, markers);
    case Kind::Entropy: return segment_entropy(traj, traj.entropies, threshold);
    case Kind::EntropyQuantile: return segment_entropy_quantile(traj, traj.entropies, quantile);
    case Kind::Fixed: return segment_fixed(traj, std::min(k, traj.output.size()));
    case Kind::Random: {
      std::uint64_t h = seed;
      for (Token t : traj.input) h = mix64(h ^ t);
      h = mix64(h ^ 0xFFFFULL);
      for (Token t : traj.output) h = mix64(h ^ t);
      Rng rng(h);
      return segment_random(traj, rng);
    }
  }
  return {};
}

}  // namespace gpg
