#include <cmath>

#include "doctest.h"
#include "gpg/env.hpp"
#include "gpg/errors.hpp"
#include "gpg/optim.hpp"
#include "test_util.hpp"

using namespace gpg;

namespace {

struct Fixture {
  TaskSpec task;
  ParamVector params;
  std::vector<Trajectory> group;
};

Fixture sampled(const PolicyShape& shape, std::uint64_t seed, std::size_t n = 6) {
  Fixture f;
  f.task = shape.vocab >= 10 ? make_task("toolgrammar") : make_task("parity", {{"vocab", std::to_string(shape.vocab)},
                                                                               {"horizon", "5"}});
  f.params = ParamVector::random(shape, seed, 0.8);
  Rng rng(seed + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenSeq input = sample_query(f.task, rng);
    Trajectory t = rollout(f.params, input, f.task.horizon, f.task.eos, rng);
    score(f.task, t);
    f.group.push_back(std::move(t));
  }
  return f;
}

Batch make_batch(const Fixture& f, const Segmenter& seg, PhiMode phi) {
  Batch b;
  b.trajectories = f.group;
  for (const auto& t : f.group) b.segmentations.push_back(seg(t));
  b.advantages = credit_table(f.group, phi);
  b.old_params = f.params;
  return b;
}

Segmenter seg(const std::string& name, const TaskSpec& task) {
  Segmenter s = Segmenter::parse(name);
  s.markers = task.markers.empty() ? std::set<Token>{0} : task.markers;
  return s;
}

bool bitwise_equal(const GradVector& a, const GradVector& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a.values[k] != b.values[k]) return false;
  }
  return true;
}

std::vector<PolicyShape> shapes() { return {table_shape(3, 2), attention_shape(3, 8), attention_shape(10, 8)}; }

}  // namespace

TEST_CASE("gpg_gradient definitions") {
  for (const auto& shape : shapes()) {
    CAPTURE(static_cast<int>(shape.backend));
    Fixture f = sampled(shape, 21);
    SUBCASE("single trajectory, K = 1, phi = R") {
      Fixture one = f;
      one.group.resize(1);
      one.group[0].reward = 0.75;
      const auto b = make_batch(one, seg("full", f.task), PhiMode::Total);
      const auto g = gpg_gradient(one.params, b);
      auto expected = grad_macro_logprob(one.params, one.group[0].input, one.group[0].output);
      expected *= 0.75;
      CHECK(gpg::testing::max_abs_diff(g.values, expected.values) <= 1e-14);
    }
    SUBCASE("zero credit annihilates") {
      auto b = make_batch(f, seg("tokens", f.task), PhiMode::Total);
      for (auto& row : b.advantages.per_token) std::fill(row.begin(), row.end(), 0.0);
      for (double x : gpg_gradient(f.params, b).values) CHECK(x == 0.0);
    }
    SUBCASE("phi = R regroups identically across segmentations") {
      const auto ref = gpg_gradient(f.params, make_batch(f, seg("full", f.task), PhiMode::Total));
      for (const char* name : {"tokens", "markers", "fixed(2)", "random", "entropy"}) {
        CAPTURE(name);
        const auto g = gpg_gradient(f.params, make_batch(f, seg(name, f.task), PhiMode::Total));
        CHECK(gpg::testing::max_abs_diff(g.values, ref.values) <= 1e-12);
      }
    }
    SUBCASE("serial and parallel agree bitwise") {
      const auto b = make_batch(f, seg("markers", f.task), PhiMode::Calibrated);
      CHECK(bitwise_equal(gpg_gradient(f.params, b, MacroPhiMode::Mean, Exec::Serial),
                          gpg_gradient(f.params, b, MacroPhiMode::Mean, Exec::Parallel)));
    }
    SUBCASE("tokens segmentation matches the per-token estimator") {
      const auto b = make_batch(f, seg("tokens", f.task), PhiMode::Grpo);
      const auto g = gpg_gradient(f.params, b);
      const auto ref = token_pg_gradient(f.params, b);
      if (shape.backend == Backend::ContextTable) {
        CHECK(bitwise_equal(g, ref));
      } else {
        CHECK(gpg::testing::max_abs_diff(g.values, ref.values) <= 1e-12);
      }
    }
  }
}

TEST_CASE("importance ratios") {
  Fixture f = sampled(table_shape(3, 2), 4);
  const TokenSeq state{0, 1};
  const TokenSeq action{1, 0};
  CHECK(importance_ratio(f.params, f.params, state, action) == 1.0);

  ParamVector moved = f.params;
  Rng rng(9);
  for (auto& v : moved.values) v += 0.3 * (rng.uniform() - 0.5);
  const double two = importance_ratio(moved, f.params, state, action);
  TokenSeq state2 = state;
  state2.push_back(action[0]);
  const double product = importance_ratio(moved, f.params, state, TokenSeq{action[0]}) *
                         importance_ratio(moved, f.params, state2, TokenSeq{action[1]});
  CHECK(two == doctest::Approx(product).epsilon(1e-12));

  // Positive logits of the taken tokens, then doubled.
  ParamVector base = ParamVector::zeros(table_shape(3, 2));
  ParamVector doubled = base;
  TokenSeq prefix = state;
  for (Token t : action) {
    // Locate the table row used at this prefix by probing.
    ParamVector probe = ParamVector::zeros(base.shape);
    std::size_t row = 0;
    for (std::size_t k = 0; k < probe.size(); k += 3) {
      probe.values[k + t] = 1.0;
      if (logits(probe, prefix)[t] == 1.0) {
        row = k;
        break;
      }
      probe.values[k + t] = 0.0;
    }
    base.values[row + t] = 0.5;
    doubled.values[row + t] = 1.0;
    prefix.push_back(t);
  }
  CHECK(importance_ratio(doubled, base, state, action) > 1.0);
}

TEST_CASE("clipped terms") {
  CHECK(clipped_term(1.5, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(clipped_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-15));
  CHECK(clipped_term(1.1, 1.0, 0.2) == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(clipped_term(0.5, 1.0, 0.2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(clipped_term(1.0, 1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(clipped_term(1.0, 1.0, 1.0), ConfigError);
}

TEST_CASE("clipped surrogate") {
  for (const auto& shape : shapes()) {
    CAPTURE(static_cast<int>(shape.backend));
    Fixture f = sampled(shape, 33, 8);
    const auto b = make_batch(f, seg("markers", f.task), PhiMode::Grpo);

    SUBCASE("on-policy equivalence") {
      const auto s = clipped_surrogate(f.params, b, 0.2);
      const auto g = gpg_gradient(f.params, b);
      CHECK(gpg::testing::max_abs_diff(s.grad.values, g.values) <= 1e-9);
      CHECK(s.report.clip_fraction == 0.0);
      CHECK(std::abs(s.report.mean_ratio - 1.0) <= 1e-12);
      CHECK(s.report.loss == -s.objective);
    }
    SUBCASE("gradient matches finite differences off-policy") {
      ParamVector moved = f.params;
      Rng rng(2);
      for (auto& v : moved.values) v += 0.2 * (rng.uniform() - 0.5);
      for (bool clip : {false, true}) {
        auto objective = [&](const ParamVector& p) {
          return clip ? clipped_surrogate(p, b, 0.2, MacroPhiMode::Mean, Exec::Serial).objective
                      : unclipped_surrogate(p, b, MacroPhiMode::Mean, Exec::Serial).objective;
        };
        const auto s = clip ? clipped_surrogate(moved, b, 0.2) : unclipped_surrogate(moved, b);
        const auto fd = gpg::testing::finite_difference(moved, objective);
        for (std::size_t k = 0; k < fd.size(); ++k) {
          CHECK(gpg::testing::close(s.grad.values[k], fd[k], 1e-5, 1e-8));
        }
      }
    }
    SUBCASE("wide clipping equals the unclipped surrogate") {
      ParamVector moved = f.params;
      Rng rng(3);
      for (auto& v : moved.values) v += 0.05 * (rng.uniform() - 0.5);
      const auto wide = clipped_surrogate(moved, b, 0.999);
      const auto plain = unclipped_surrogate(moved, b);
      CHECK(wide.report.clip_fraction == 0.0);
      CHECK(wide.objective == plain.objective);
      CHECK(bitwise_equal(wide.grad, plain.grad));
    }
    SUBCASE("full segmentation reproduces the group objective") {
      const auto full = make_batch(f, seg("full", f.task), PhiMode::Grpo);
      Rng rng(4);
      for (int trial = 0; trial < 10; ++trial) {
        ParamVector moved = f.params;
        for (auto& v : moved.values) v += 0.6 * (rng.uniform() - 0.5);
        const double direct = grpo_objective(moved, f.params, f.group, 0.2);
        CHECK(std::abs(clipped_surrogate(moved, full, 0.2).objective - direct) <= 1e-12);
      }
    }
  }
  Fixture f = sampled(table_shape(3, 2), 5);
  const auto b = make_batch(f, seg("full", f.task), PhiMode::Grpo);
  CHECK_THROWS_AS(clipped_surrogate(f.params, b, 1.5), ConfigError);
  CHECK_THROWS_AS(clipped_surrogate(f.params, b, 0.0), ConfigError);
  Batch broken = b;
  broken.trajectories[0].behavior_logprobs.pop_back();
  if (!broken.trajectories[0].output.empty()) CHECK_THROWS_AS(clipped_surrogate(f.params, broken, 0.2), DomainError);
}

TEST_CASE("kl diagnostic") {
  Fixture f = sampled(table_shape(3, 2), 8);
  const auto b = make_batch(f, seg("full", f.task), PhiMode::Grpo);
  CHECK(kl_to_old(f.params, b) == doctest::Approx(0.0).epsilon(1e-12));
  ParamVector moved = f.params;
  for (auto& v : moved.values) v += 0.3;
  moved.values[0] += 1.0;
  CHECK(kl_to_old(moved, b) >= 0.0);
}

TEST_CASE("sgd steps") {
  ParamVector p = ParamVector::random(table_shape(3, 1), 1);
  const ParamVector start = p;
  sgd_step(p, GradVector(p.size()), 0.1);
  CHECK(p.values == start.values);

  GradVector e(p.size());
  e.values[3] = 1.0;
  sgd_step(p, e, 1.0);
  CHECK(p.values[3] == start.values[3] + 1.0);

  GradVector g(p.size());
  Rng rng(2);
  for (auto& x : g.values) x = rng.uniform();
  ParamVector a = start, b = start;
  sgd_step(a, g, 0.5);
  sgd_step(b, g, 0.25);
  sgd_step(b, g, 0.25);
  CHECK(gpg::testing::max_abs_diff(a.values, b.values) <= 1e-15);

  ParamVector c = start;
  g.values[1] = std::nan("");
  CHECK_THROWS_AS(sgd_step(c, g, 0.1), NumericError);
  CHECK(c.values == start.values);
  CHECK_THROWS_AS(sgd_step(c, e, 0.0), DomainError);
  CHECK_THROWS_AS(sgd_step(c, GradVector(2), 0.1), DomainError);
}

TEST_CASE("adam steps") {
  ParamVector p = ParamVector::random(table_shape(3, 1), 1);
  const ParamVector start = p;
  AdamState s = AdamState::zeros(p.size());
  adam_step(s, p, GradVector(p.size()), AdamConfig{});
  CHECK(p.values == start.values);
  CHECK(s.step == 1);

  p = start;
  s = AdamState::zeros(p.size());
  GradVector g(p.size());
  for (std::size_t k = 0; k < g.size(); ++k) g.values[k] = (k % 2 ? -1.0 : 1.0) * (0.1 + 0.3 * static_cast<double>(k));
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(s, p, g, cfg);
  for (std::size_t k = 0; k < p.size(); ++k) {
    // m_hat = g, v_hat = g^2 after bias correction.
    const double step = p.values[k] - start.values[k];
    CHECK(step == doctest::Approx(cfg.lr * g.values[k] / (std::abs(g.values[k]) + cfg.eps)).epsilon(1e-10));
  }

  ParamVector q = start;
  AdamState t = AdamState::zeros(q.size());
  GradVector bad(q.size());
  bad.values[0] = INFINITY;
  CHECK_THROWS_AS(adam_step(t, q, bad, cfg), NumericError);
  CHECK(q.values == start.values);
  CHECK(t.step == 0);
}
