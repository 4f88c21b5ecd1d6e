#include "gpg/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>

#include "gpg/beam.hpp"
#include "gpg/credit.hpp"
#include "gpg/errors.hpp"
#include "gpg/optim.hpp"

namespace gpg {

namespace {

using Clock = std::chrono::steady_clock;

CheckResult timed(const std::string& name, const std::function<bool(std::ostringstream&)>& body) {
  CheckResult r;
  r.name = name;
  const auto start = Clock::now();
  std::ostringstream detail;
  detail.precision(3);
  try {
    r.passed = body(detail);
  } catch (const std::exception& e) {
    r.passed = false;
    detail << "exception: " << e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  r.detail = detail.str();
  return r;
}

TaskSpec parity(std::uint32_t vocab, std::size_t horizon) {
  return make_task("parity", {{"vocab", std::to_string(vocab)}, {"horizon", std::to_string(horizon)}});
}

// Largest |a - b| / max(abs_floor, rel * |b|) over components.
double excess(const GradVector& a, const GradVector& b, double rel, double abs_floor) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double tol = std::max(abs_floor, rel * std::abs(b.values[k]));
    worst = std::max(worst, std::abs(a.values[k] - b.values[k]) / tol);
  }
  return worst;
}

double max_abs_diff(const GradVector& a, const GradVector& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a.values[k] - b.values[k]));
  return worst;
}

// The six strategies, configured for a parity task with vocabulary V.
std::vector<Segmenter> six_segmenters(std::uint32_t vocab, std::uint64_t seed) {
  std::vector<Segmenter> out;
  for (const char* name : {"full", "tokens", "markers", "entropy", "fixed(2)", "random"}) {
    Segmenter s = Segmenter::parse(name);
    s.markers = {0};
    s.threshold = 0.8 * std::log(static_cast<double>(vocab));
    s.seed = seed;
    out.push_back(s);
  }
  return out;
}

// Deterministic pseudo-random state-dependent baseline.
std::function<double(const TokenSeq&)> hashed_baseline(std::uint64_t salt) {
  return [salt](const TokenSeq& ms) {
    std::uint64_t h = mix64(salt + ms.size());
    for (Token t : ms) h = mix64(h ^ (t + 0x9E37ULL));
    return 4.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 2.0;
  };
}

struct SampledGroup {
  TaskSpec task;
  ParamVector params;
  std::vector<Trajectory> trajectories;
};

SampledGroup sample_group(const PolicyShape& shape, const TaskSpec& task, std::size_t n, std::uint64_t seed,
                          double scale) {
  SampledGroup g{task, ParamVector::random(shape, derive_seed(seed, "params", 0), scale), {}};
  Rng rng(derive_seed(seed, "sample", 0));
  const TokenSeq input = sample_query(task, rng);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory t = rollout(g.params, input, task.horizon, task.eos, rng);
    score(task, t);
    g.trajectories.push_back(std::move(t));
  }
  return g;
}

Batch batch_of(const SampledGroup& g, const Segmenter& seg, PhiMode phi) {
  Batch b;
  b.trajectories = g.trajectories;
  for (const auto& t : b.trajectories) b.segmentations.push_back(seg(t));
  b.advantages = credit_table(b.trajectories, phi);
  b.old_params = g.params;
  return b;
}

// A beamed group sampled from a policy, as the training loop builds it.
Batch beamed_batch(const PolicyShape& shape, std::uint64_t seed) {
  const TaskSpec task = make_task("toolgrammar");
  const ParamVector params = ParamVector::random(shape, derive_seed(seed, "params", 1), 1.5);
  Segmenter seg = Segmenter::parse("tokens");
  Rng rng(derive_seed(seed, "beam", 0));
  const TokenSeq input = sample_query(task, rng);
  BeamTree tree = init_root(task, input, 4, params, rng, seg);
  run_beaming(tree, BeamSchedule{2, 3, 10}, params, rng);
  Batch b;
  b.trajectories = tree.leaves();
  for (const auto& leaf : tree.leaf_records()) b.segmentations.push_back(leaf.seg);
  b.advantages = credit_table(b.trajectories, PhiMode::Calibrated);
  b.old_params = params;
  return b;
}

}  // namespace

CheckResult check_gpg_theorem(const VerifyOptions& opt) {
  return timed("gpg_theorem", [&](std::ostringstream& out) {
    double worst = 0.0, worst_fd = 0.0;
    std::size_t comparisons = 0;
    for (std::uint32_t vocab : {2u, 3u, 4u}) {
      for (std::size_t horizon : {3u, 4u, 5u}) {
        const TaskSpec task = parity(vocab, horizon);
        for (std::size_t d = 0; d < opt.draws; ++d) {
          const std::uint64_t idx = (vocab * 16 + horizon) * 1000 + d;
          const ParamVector p = ParamVector::random(table_shape(vocab, 2), derive_seed(opt.seed, "gpg", idx), 1.0);
          // Oracle gradient by two routes: likelihood ratio and finite differences.
          const GradientCheck exact = exact_gradient_check(p, task, {}, horizon, opt.cap);
          worst_fd = std::max(worst_fd, exact.worst_excess);
          for (const Segmenter& s : six_segmenters(vocab, idx)) {
            const GradVector gpg = exact_gpg_expectation(p, task, {}, horizon, s, credit_total_reward(), opt.cap);
            worst = std::max(worst, excess(gpg, exact.likelihood_ratio, 1e-7, 1e-9));
            ++comparisons;
          }
        }
      }
    }
    out << comparisons << " (V, H, draw, segmenter) comparisons; worst error / tolerance = " << worst
        << "; oracle likelihood-ratio vs finite differences: worst error / tolerance = " << worst_fd;
    return worst <= 1.0 && worst_fd <= 1.0;
  });
}

CheckResult check_baseline_invariance(const VerifyOptions& opt) {
  return timed("baseline_invariance", [&](std::ostringstream& out) {
    double worst = 0.0;
    std::size_t comparisons = 0;
    const TaskSpec task = parity(3, 4);
    for (const auto& shape : {table_shape(3, 2), attention_shape(3, 8)}) {
      for (std::size_t d = 0; d < opt.draws; ++d) {
        const ParamVector p = ParamVector::random(shape, derive_seed(opt.seed, "baseline", d), 1.0);
        for (const Segmenter& s : six_segmenters(3, d)) {
          // fixed(K) and random partitions look at the whole output, so
          // their macro states are not stopping times.
          if (s.kind == Segmenter::Kind::Fixed || s.kind == Segmenter::Kind::Random) continue;
          const GradVector plain = exact_gpg_expectation(p, task, {}, 4, s, credit_total_reward(), opt.cap);
          const GradVector based =
              exact_gpg_expectation(p, task, {}, 4, s, credit_baselined(hashed_baseline(d)), opt.cap);
          worst = std::max(worst, max_abs_diff(plain, based));
          ++comparisons;
        }
      }
    }
    out << comparisons << " comparisons over stopping-time segmentations; max |difference| = " << worst;
    return worst <= 1e-9;
  });
}

CheckResult check_normalization(const VerifyOptions& opt) {
  return timed("normalization", [&](std::ostringstream& out) {
    double worst = 0.0;
    std::size_t spaces = 0;
    struct Case {
      PolicyShape shape;
      std::size_t horizon;
    };
    const std::vector<Case> cases{{table_shape(2, 2), 5}, {table_shape(3, 2), 5}, {table_shape(4, 3), 5},
                                  {attention_shape(2, 8), 4}, {attention_shape(3, 8), 4}};
    for (const auto& c : cases) {
      const auto space = enumerate_space(c.shape.vocab, c.shape.vocab - 1, c.horizon, opt.cap);
      for (std::size_t d = 0; d < 2 * opt.draws; ++d) {
        const ParamVector p = ParamVector::random(c.shape, derive_seed(opt.seed, "norm", d), 2.0);
        const TokenSeq input{static_cast<Token>(d % (c.shape.vocab - 1))};
        double sum = 0.0;
        for (const auto& o : space.outputs) sum += traj_prob(p, input, o);
        worst = std::max(worst, std::abs(sum - 1.0));
        ++spaces;
      }
    }
    out << spaces << " trajectory spaces on both backends; max |sum - 1| = " << worst;
    return worst <= 1e-9;
  });
}

CheckResult check_unbiasedness(const VerifyOptions& opt) {
  return timed("unbiasedness", [&](std::ostringstream& out) {
    const TaskSpec task = parity(3, 4);
    bool ok = true;
    for (const auto& shape : {table_shape(3, 2), attention_shape(3, 8)}) {
      const ParamVector p = ParamVector::random(shape, derive_seed(opt.seed, "unbias", 0), 1.0);
      const GradVector exact = exact_gradient(p, task, {}, task.horizon, opt.cap);
      const Segmenter seg = six_segmenters(3, 0)[2];  // markers

      Batch batch;
      batch.trajectories.resize(opt.rollouts);
      parallel::for_each_index(opt.rollouts, [&](std::size_t i) {
        Rng rng(derive_seed(opt.seed, "unbias_rollout", i));
        Trajectory t = rollout(p, {}, task.horizon, task.eos, rng);
        score(task, t);
        batch.trajectories[i] = std::move(t);
      });
      for (const auto& t : batch.trajectories) batch.segmentations.push_back(seg(t));
      batch.advantages = credit_table(batch.trajectories, PhiMode::Total);
      const GradVector mean = gpg_gradient(p, batch);

      // Second moments from the same per-trajectory contributions.
      const std::size_t dim = p.size();
      const auto sq = parallel::chunked_sum(opt.rollouts, dim, [&](std::size_t i, std::vector<double>& acc) {
        const Trajectory& t = batch.trajectories[i];
        if (t.output.empty() || t.reward == 0.0) return;
        GradVector g(dim);
        SequenceTape(p, t.input, t.output).backward(std::vector<double>(t.output.size(), t.reward), g);
        for (std::size_t k = 0; k < dim; ++k) acc[k] += g.values[k] * g.values[k];
      });
      const double n = static_cast<double>(opt.rollouts);
      std::size_t inside = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double var = std::max(0.0, sq[k] / n - mean.values[k] * mean.values[k]) * n / (n - 1.0);
        const double se = std::sqrt(var / n);
        const double diff = std::abs(mean.values[k] - exact.values[k]);
        if (diff <= 3.0 * se || diff <= 1e-12) ++inside;
      }
      const double fraction = static_cast<double>(inside) / static_cast<double>(dim);
      out << (shape.backend == Backend::ContextTable ? "table" : "attention") << ": " << inside << "/" << dim
          << " components within 3 SE (" << 100.0 * fraction << "%); ";
      ok = ok && fraction >= 0.95;
    }
    out << opt.rollouts << " rollouts each";
    return ok;
  });
}

CheckResult check_gradient_fd(const VerifyOptions& opt) {
  return timed("gradient_fd", [&](std::ostringstream& out) {
    std::size_t cases[2] = {0, 0}, bad[2] = {0, 0}, components = 0;
    double worst = 0.0;
    Rng rng(derive_seed(opt.seed, "fd", 0));
    for (int b = 0; b < 2; ++b) {
      for (std::size_t c = 0; c < opt.fd_cases; ++c) {
        const auto vocab = static_cast<std::uint32_t>(2 + rng.below(4));
        const PolicyShape shape = b == 0 ? table_shape(vocab, static_cast<std::uint32_t>(1 + rng.below(3)))
                                         : attention_shape(vocab, static_cast<std::uint32_t>(2 + rng.below(7)));
        const ParamVector p = ParamVector::random(shape, rng.next(), 1.0);
        TokenSeq prefix(rng.below(7));
        for (auto& t : prefix) t = static_cast<Token>(rng.below(vocab));
        const auto token = static_cast<Token>(rng.below(vocab));
        const GradVector g = grad_logprob(p, prefix, token);
        ParamVector probe = p;
        bool case_ok = true;
        for (std::size_t k = 0; k < p.size(); ++k) {
          const double h = kFiniteDifferenceStep;
          probe.values[k] = p.values[k] + h;
          const double up = token_logprob(probe, prefix, token);
          probe.values[k] = p.values[k] - h;
          const double down = token_logprob(probe, prefix, token);
          probe.values[k] = p.values[k];
          const double fd = (up - down) / (2.0 * h);
          const double tol = std::max(1e-8, 1e-5 * std::max(std::abs(fd), std::abs(g.values[k])));
          const double e = std::abs(fd - g.values[k]) / tol;
          worst = std::max(worst, e);
          case_ok = case_ok && e <= 1.0;
          ++components;
        }
        ++cases[b];
        if (!case_ok) ++bad[b];
      }
    }
    out << cases[0] << " table cases (" << bad[0] << " failing), " << cases[1] << " attention cases (" << bad[1]
        << " failing), " << components << " components; worst error / tolerance = " << worst;
    return bad[0] == 0 && bad[1] == 0 && cases[0] >= 100 && cases[1] >= 100;
  });
}

CheckResult check_exact_gradient_routes(const VerifyOptions& opt) {
  return timed("exact_gradient_routes", [&](std::ostringstream& out) {
    double worst = 0.0;
    std::size_t n = 0;
    for (std::size_t d = 0; d < 2 * opt.draws; ++d) {
      const PolicyShape shape = d % 2 ? attention_shape(3, 4) : table_shape(3, 2);
      const ParamVector p = ParamVector::random(shape, derive_seed(opt.seed, "routes", d), 1.0);
      const auto check = exact_gradient_check(p, parity(3, 4), {}, 4, opt.cap);
      worst = std::max(worst, check.worst_excess);
      ++n;
    }
    out << n << " parameter draws; worst likelihood-ratio vs finite-difference error / tolerance = " << worst;
    return worst <= 1.0;
  });
}

CheckResult check_token_reduction(const VerifyOptions& opt) {
  return timed("special_case_tokens", [&](std::ostringstream& out) {
    std::size_t batches = 0, differing = 0;
    for (std::size_t d = 0; d < opt.draws; ++d) {
      const SampledGroup g = sample_group(table_shape(3, 2), parity(3, 6), 64, derive_seed(opt.seed, "tok", d), 1.0);
      for (PhiMode phi : {PhiMode::Grpo, PhiMode::Total, PhiMode::Baselined}) {
        const Batch b = batch_of(g, Segmenter::parse("tokens"), phi);
        const GradVector macro = gpg_gradient(g.params, b);
        const GradVector token = token_pg_gradient(g.params, b);
        if (std::memcmp(macro.values.data(), token.values.data(), macro.size() * sizeof(double)) != 0) ++differing;
        ++batches;
      }
    }
    out << batches << " fixed batches (context table); " << differing << " not bit-identical";
    return differing == 0;
  });
}

CheckResult check_grpo_reduction(const VerifyOptions& opt) {
  return timed("special_case_grpo", [&](std::ostringstream& out) {
    double worst = 0.0;
    std::size_t evaluations = 0, clipped_steps = 0, steps = 0;
    for (const auto& shape : {table_shape(3, 2), attention_shape(3, 8)}) {
      for (std::size_t d = 0; d < opt.draws; ++d) {
        const SampledGroup g = sample_group(shape, parity(3, 6), 16, derive_seed(opt.seed, "grpo", d), 1.0);
        const Batch b = batch_of(g, Segmenter::parse("full"), PhiMode::Grpo);
        Rng rng(derive_seed(opt.seed, "grpo_move", d));
        for (double spread : {0.0, 0.2, 1.0}) {
          ParamVector moved = g.params;
          for (auto& v : moved.values) v += spread * (rng.uniform() - 0.5);
          const SurrogateResult s = clipped_surrogate(moved, b, kDefaultEpsClip);
          const double direct = grpo_objective(moved, g.params, g.trajectories, kDefaultEpsClip);
          worst = std::max(worst, std::abs(s.objective - direct));
          clipped_steps += static_cast<std::size_t>(std::lround(s.report.clip_fraction * b.size()));
          steps += b.size();
          ++evaluations;
        }
      }
    }
    out << evaluations << " objective evaluations on both backends (" << clipped_steps << "/" << steps
        << " sequences clipped); max |difference| = " << worst;
    return worst <= 1e-12;
  });
}

CheckResult check_on_policy(const VerifyOptions& opt) {
  return timed("on_policy_equivalence", [&](std::ostringstream& out) {
    double worst = 0.0, worst_clip = 0.0;
    std::size_t batches = 0;
    for (const auto& shape : {table_shape(10, 2), attention_shape(10, 8)}) {
      for (std::size_t d = 0; d < opt.draws; ++d) {
        const Batch b = beamed_batch(shape, derive_seed(opt.seed, "onpolicy", d));
        for (MacroPhiMode mode : {MacroPhiMode::Mean, MacroPhiMode::FirstToken}) {
          const SurrogateResult s = clipped_surrogate(b.old_params, b, kDefaultEpsClip, mode);
          const GradVector g = gpg_gradient(b.old_params, b, mode);
          worst = std::max(worst, max_abs_diff(s.grad, g));
          worst_clip = std::max(worst_clip, s.report.clip_fraction);
          ++batches;
        }
      }
    }
    out << batches << " beamed batches on both backends; max |difference| = " << worst
        << ", max clip_fraction = " << worst_clip;
    return worst <= 1e-9 && worst_clip == 0.0;
  });
}

CheckResult check_calibration(const VerifyOptions& opt) {
  return timed("calibration", [&](std::ostringstream& out) {
    bool ok = true;

    // Whole-group-shared positions average to zero.
    double worst_shared = 0.0;
    std::size_t shared_positions = 0;
    for (std::size_t d = 0; d < 4 * opt.draws; ++d) {
      const Batch b = beamed_batch(table_shape(10, 2), derive_seed(opt.seed, "calib", d));
      const SharingSets sets = sharing_sets_of(b.trajectories);
      for (std::size_t i = 0; i < b.size(); ++i) {
        for (std::size_t t = 1; t <= b.trajectories[i].output.size(); ++t) {
          if (sets.set(i, t).size() != b.size()) continue;
          worst_shared = std::max(worst_shared, std::abs(b.advantages.per_token[i][t - 1]));
          ++shared_positions;
        }
      }
    }
    ok = ok && worst_shared <= 1e-12;
    out << "shared positions: " << shared_positions << ", max |A| = " << worst_shared << "; ";

    // Distinct trajectories: every position after the (always shared) first
    // one carries the trajectory's own initial advantage.
    std::size_t distinct_mismatch = 0, distinct_positions = 0;
    Rng rng(derive_seed(opt.seed, "distinct", 0));
    for (std::size_t d = 0; d < 4 * opt.draws; ++d) {
      const std::size_t n = 2 + rng.below(6);
      std::vector<Trajectory> group(n);
      for (std::size_t i = 0; i < n; ++i) {
        group[i].output.push_back(static_cast<Token>(i));
        for (std::size_t k = rng.below(5); k > 0; --k) group[i].output.push_back(static_cast<Token>(rng.below(3)));
        group[i].reward = rng.uniform();
      }
      std::vector<double> rewards;
      for (const auto& t : group) rewards.push_back(t.reward);
      const auto init = init_advantages(rewards);
      const auto table = calibrate(sharing_sets_of(group), init);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 2; t <= group[i].output.size(); ++t) {
          ++distinct_positions;
          if (table.per_token[i][t - 1] != init[i]) ++distinct_mismatch;
        }
      }
    }
    ok = ok && distinct_mismatch == 0;
    out << "distinct positions: " << distinct_positions << ", " << distinct_mismatch << " differ from A_init; ";

    // Two leaves, A_init = [1, -1], first differing output token at position 3.
    std::vector<Trajectory> two(2);
    two[0].output = {1, 2, 3, 4, 5};
    two[1].output = {1, 2, 0, 4, 5};
    const auto table = calibrate(sharing_sets_of(two), std::vector<double>{1.0, -1.0});
    const bool example = table.per_token[0] == std::vector<double>{0, 0, 0, 1, 1} &&
                         table.per_token[1] == std::vector<double>{0, 0, 0, -1, -1};
    ok = ok && example;
    out << "two-leaf example " << (example ? "matches" : "differs");
    return ok;
  });
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"gpg", "unbias", "calib", "grad"};
  return names;
}

std::vector<CheckResult> run_suite(const std::string& suite, const VerifyOptions& opt) {
  if (suite == "gpg") return {check_gpg_theorem(opt), check_baseline_invariance(opt), check_normalization(opt)};
  if (suite == "unbias") return {check_unbiasedness(opt)};
  if (suite == "calib") return {check_calibration(opt), check_on_policy(opt)};
  if (suite == "grad") {
    return {check_gradient_fd(opt), check_exact_gradient_routes(opt), check_token_reduction(opt),
            check_grpo_reduction(opt)};
  }
  throw ConfigError("unknown suite '" + suite + "' (expected gpg, unbias, calib or grad)");
}

}  // namespace gpg
