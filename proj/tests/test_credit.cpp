#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gpg/credit.hpp"
#include "gpg/errors.hpp"
#include "test_util.hpp"

using namespace gpg;

namespace {

Trajectory leaf(TokenSeq o, double reward) {
  Trajectory t;
  t.output = std::move(o);
  t.reward = reward;
  return t;
}

std::vector<double> rewards_of(const std::vector<Trajectory>& g) {
  std::vector<double> r;
  for (const auto& t : g) r.push_back(t.reward);
  return r;
}

}  // namespace

TEST_CASE("group statistics") {
  const std::vector<double> a{1, 0, 1, 0};
  auto s = group_stats(a);
  CHECK(s.mean == 0.5);
  CHECK(s.std == 0.5);
  CHECK(s.size == 4);

  const std::vector<double> b{1, 1, 1};
  s = group_stats(b);
  CHECK(s.mean == 1.0);
  CHECK(s.std == 0.0);

  const std::vector<double> c{0.2, 0.8};
  s = group_stats(c);
  CHECK(s.mean == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.std == doctest::Approx(0.3).epsilon(1e-15));

  CHECK_THROWS_AS(group_stats(std::vector<double>{}), DomainError);
}

TEST_CASE("initial advantages") {
  CHECK(init_advantages(std::vector<double>{1, 0, 1, 0}) == std::vector<double>{1, -1, 1, -1});
  CHECK(init_advantages(std::vector<double>{1, 1, 1}) == std::vector<double>{0, 0, 0});
  auto a = init_advantages(std::vector<double>{0.2, 0.8});
  CHECK(a[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("group mean is zero") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> r(2 + rng.below(10));
      for (auto& x : r) x = rng.uniform() * 3.0 - 1.0;
      const auto adv = init_advantages(r);
      CHECK(std::abs(std::accumulate(adv.begin(), adv.end(), 0.0)) <= 1e-12);
    }
  }
  SUBCASE("variance below eps gives zeros") {
    const std::vector<double> r{0.5, 0.5 + 1e-10, 0.5};
    for (double x : init_advantages(r)) CHECK(x == 0.0);
  }
}

TEST_CASE("calibration") {
  SUBCASE("two leaves diverging at position 3") {
    std::vector<Trajectory> g{leaf({1, 2, 3, 4, 5}, 1.0), leaf({1, 2, 0, 4, 5}, 0.0)};
    const std::vector<double> init{1.0, -1.0};
    auto table = calibrate(sharing_sets_of(g), init);
    CHECK(table.per_token[0] == std::vector<double>{0, 0, 0, 1, 1});
    CHECK(table.per_token[1] == std::vector<double>{0, 0, 0, -1, -1});
    CHECK(table.initial == init);
    table.validate(g);
  }
  SUBCASE("singleton sets after the first token reduce to grpo") {
    std::vector<Trajectory> g{leaf({0, 1, 1}, 1.0), leaf({1, 1}, 0.0), leaf({2, 0, 0, 0}, 0.5)};
    auto cal = credit_table(g, PhiMode::Calibrated);
    auto grpo = credit_table(g, PhiMode::Grpo);
    for (std::size_t i = 0; i < g.size(); ++i) {
      // Position 1 is shared by the whole group and averages to zero.
      CHECK(std::abs(cal.per_token[i][0]) <= 1e-12);
      for (std::size_t t = 1; t < g[i].output.size(); ++t) CHECK(cal.per_token[i][t] == grpo.per_token[i][t]);
    }
  }
  SUBCASE("whole-group positions are zero and values change only with S_t") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Trajectory> g;
      const std::size_t n = 1 + rng.below(7);
      for (std::size_t i = 0; i < n; ++i) {
        g.push_back(leaf(gpg::testing::random_tokens(rng, 1 + rng.below(5), 2), rng.uniform()));
      }
      const auto sets = sharing_sets_of(g);
      const auto table = calibrate(sets, init_advantages(rewards_of(g)));
      table.validate(g);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 1; t <= g[i].output.size(); ++t) {
          if (sets.set(i, t).size() == n) CHECK(std::abs(table.per_token[i][t - 1]) <= 1e-12);
          if (t >= 2 && sets.id(i, t) == sets.id(i, t - 1)) {
            CHECK(table.per_token[i][t - 1] == table.per_token[i][t - 2]);
          }
        }
      }
    }
  }
  SUBCASE("constant rewards give an all-zero table") {
    std::vector<Trajectory> g{leaf({0, 1}, 1.0), leaf({0, 0, 1}, 1.0), leaf({1}, 1.0)};
    auto table = credit_table(g, PhiMode::Calibrated);
    for (const auto& row : table.per_token) {
      for (double x : row) CHECK(x == 0.0);
    }
  }
  CHECK_THROWS_AS(calibrate(sharing_sets_of({leaf({0}, 1.0)}), std::vector<double>{1.0, 2.0}), DomainError);
}

TEST_CASE("phi strategies") {
  CHECK(phi_total_reward(leaf({0, 1, 2}, 1.0)) == std::vector<double>{1, 1, 1});
  CHECK(phi_total_reward(leaf({0, 1}, 0.0)) == std::vector<double>{0, 0});
  const auto t = leaf({0, 0, 1}, 0.75);
  CHECK(phi_total_reward(t) == phi_reward_to_go(terminal_rewards(t)));

  CHECK(phi_reward_to_go(std::vector<double>{0, 0, 1}) == std::vector<double>{1, 1, 1});
  CHECK(phi_reward_to_go(std::vector<double>{1, 1, 1}) == std::vector<double>{3, 2, 1});
  CHECK(phi_reward_to_go(std::vector<double>{}).empty());

  const std::vector<double> rtg{1, 1, 1};
  CHECK(phi_baselined(rtg, std::vector<double>{0, 0, 0}) == rtg);
  CHECK(phi_baselined(rtg, rtg) == std::vector<double>{0, 0, 0});
  CHECK(phi_baselined(rtg, std::vector<double>{0.5, 0.5, 0.5}) == std::vector<double>{0.5, 0.5, 0.5});
  CHECK_THROWS_AS(phi_baselined(rtg, std::vector<double>{0, 0}), DomainError);

  CHECK(parse_phi("calibrated") == PhiMode::Calibrated);
  CHECK(to_string(parse_phi("rtg")) == "rtg");
  CHECK_THROWS_AS(parse_phi("gae"), ConfigError);
}

TEST_CASE("macro credit") {
  const std::vector<double> constant{2, 2, 2};
  for (auto mode : {MacroPhiMode::FirstToken, MacroPhiMode::Mean}) {
    CHECK(macro_phi(constant, MacroStep{0, 0, 3}, mode, true) == 2.0);
    CHECK(macro_phi(constant, MacroStep{1, 1, 2}, mode) == 2.0);
  }
  CHECK(macro_phi(std::vector<double>{0, 0, 1, 1}, MacroStep{2, 2, 4}, MacroPhiMode::Mean) == 1.0);
  CHECK(macro_phi(std::vector<double>{0, 1}, MacroStep{0, 0, 2}, MacroPhiMode::Mean) == 0.5);
  CHECK(macro_phi(std::vector<double>{0, 1}, MacroStep{0, 0, 2}, MacroPhiMode::FirstToken) == 0.0);
  CHECK_THROWS_AS(macro_phi(std::vector<double>{0, 1}, MacroStep{0, 0, 2}, MacroPhiMode::FirstToken, true),
                  DomainError);
  CHECK_THROWS_AS(macro_phi(std::vector<double>{0, 1}, MacroStep{1, 1, 3}, MacroPhiMode::Mean), DomainError);
  CHECK_THROWS_AS(macro_phi(std::vector<double>{0, 1}, MacroStep{1, 1, 1}, MacroPhiMode::Mean), DomainError);

  AdvantageTable table;
  table.per_token = {{0, 0, 1, 1}};
  CHECK(macro_phi(table, 0, MacroStep{0, 2, 4}, MacroPhiMode::FirstToken, true) == 1.0);
  CHECK_THROWS_AS(macro_phi(table, 1, MacroStep{0, 0, 1}, MacroPhiMode::Mean), DomainError);
  CHECK(parse_macro_phi("mean") == MacroPhiMode::Mean);
  CHECK_THROWS_AS(parse_macro_phi("last"), ConfigError);
}

TEST_CASE("credit tables") {
  std::vector<Trajectory> g{leaf({0, 1}, 1.0), leaf({1, 1, 1}, 0.0)};
  auto total = credit_table(g, PhiMode::Total);
  CHECK(total.per_token[1] == std::vector<double>{0, 0, 0});
  auto base = credit_table(g, PhiMode::Baselined);
  CHECK(base.per_token[0] == std::vector<double>{0.5, 0.5});
  CHECK(base.per_token[1] == std::vector<double>{-0.5, -0.5, -0.5});
  auto grpo = credit_table(g, PhiMode::Grpo);
  CHECK(grpo.per_token[0] == std::vector<double>{1, 1});
  CHECK(grpo.per_token[1] == std::vector<double>{-1, -1, -1});

  AdvantageTable bad = total;
  bad.per_token[0].push_back(0.0);
  CHECK_THROWS_AS(bad.validate(g), DomainError);
  bad = total;
  bad.per_token[0][0] = std::nan("");
  CHECK_THROWS_AS(bad.validate(g), NumericError);
}
