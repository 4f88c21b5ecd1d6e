#include "doctest.h"
#include "gpg/errors.hpp"
#include "gpg/segmentation.hpp"
#include "test_util.hpp"

using namespace gpg;

namespace {

Trajectory traj_of(TokenSeq output, TokenSeq input = {}) {
  Trajectory t;
  t.input = std::move(input);
  t.output = std::move(output);
  t.behavior_logprobs.assign(t.output.size(), -1.0);
  t.entropies.assign(t.output.size(), 0.0);
  return t;
}

using B = std::vector<std::size_t>;

void check_tiling(const Trajectory& t, const Segmentation& seg) {
  seg.validate(t.output.size());
  auto steps = macro_steps(t, seg);
  REQUIRE(steps.size() == seg.K());
  TokenSeq joined;
  std::size_t expect_start = 0;
  std::size_t expect_state = t.input.size();
  for (const auto& s : steps) {
    CHECK(s.start == expect_start);
    CHECK(s.state_len == expect_state);
    CHECK(s.length() > 0);
    CHECK(macro_state(t, s).size() == s.state_len);
    auto a = macro_action(t, s);
    joined.insert(joined.end(), a.begin(), a.end());
    expect_start = s.end;
    expect_state += s.length();
  }
  CHECK(joined == t.output);
}

}  // namespace

TEST_CASE("segment_full") {
  CHECK(segment_full(traj_of({1, 2, 3, 4, 5})).boundaries == B{5});
  CHECK(segment_full(traj_of({1})).boundaries == B{1});
  auto t = traj_of({0, 1, 0});
  CHECK(segment_full(t) == segment_fixed(t, 1));
  CHECK_THROWS_AS(segment_full(traj_of({})), DomainError);
}

TEST_CASE("segment_tokens") {
  CHECK(segment_tokens(traj_of({4, 4, 4})).boundaries == B{1, 2, 3});
  auto one = traj_of({2});
  CHECK(segment_tokens(one) == segment_full(one));
  auto t = traj_of({1, 2, 3, 4});
  for (const auto& s : macro_steps(t, segment_tokens(t))) CHECK(s.length() == 1);
  CHECK_THROWS_AS(segment_tokens(traj_of({})), DomainError);
}

TEST_CASE("segment_markers") {
  CHECK(segment_markers(traj_of({5, 9, 7, 9, 3}), {9}).boundaries == B{2, 4, 5});
  CHECK(segment_markers(traj_of({9}), {9}).boundaries == B{1});
  CHECK(segment_markers(traj_of({5, 7, 3}), {9}).boundaries == B{3});
  CHECK(segment_markers(traj_of({9, 9, 1}), {9}).boundaries == B{1, 2, 3});
  CHECK(segment_markers(traj_of({1, 9}), {}).K() == 1);
}

TEST_CASE("segment_entropy") {
  auto t = traj_of({1, 2, 3});
  const std::vector<double> h{0.1, 0.9, 0.1};
  CHECK(segment_entropy(t, h, 0.5).boundaries == B{2, 3});
  CHECK(segment_entropy(t, h, 1.0).K() == 1);
  CHECK(segment_entropy(t, h, -1.0) == segment_tokens(t));
  CHECK_THROWS_AS(segment_entropy(t, std::vector<double>{0.1}, 0.5), DomainError);
}

TEST_CASE("segment_entropy_quantile") {
  auto t = traj_of({1, 2, 3, 4});
  const std::vector<double> h{0.3, 0.9, 0.1, 0.5};
  CHECK(segment_entropy_quantile(t, h, 0.5).boundaries == B{2, 4});
  CHECK(segment_entropy_quantile(t, h, 0.0).boundaries == B{4});
  CHECK(segment_entropy_quantile(t, h, 1.0) == segment_tokens(t));
}

TEST_CASE("segment_fixed") {
  CHECK(segment_fixed(traj_of({1, 1, 1, 1, 1}), 2).boundaries == B{3, 5});
  CHECK(segment_fixed(traj_of({1, 1, 1, 1}), 4).boundaries == B{1, 2, 3, 4});
  CHECK(segment_fixed(traj_of({1, 1, 1, 1, 1, 1, 1}), 3).boundaries == B{3, 5, 7});
  CHECK_THROWS_AS(segment_fixed(traj_of({1, 1, 1, 1}), 5), DomainError);
  CHECK_THROWS_AS(segment_fixed(traj_of({1, 1}), 0), DomainError);
  auto t = traj_of({0, 1, 2, 3, 4, 5});
  CHECK(segment_fixed(t, t.output.size()) == segment_tokens(t));
}

TEST_CASE("macro_steps") {
  auto t = traj_of({5, 9, 7, 9, 3}, {1, 1, 1});
  auto one = macro_steps(t, segment_full(t));
  REQUIRE(one.size() == 1);
  CHECK(one[0].state_len == 3);
  CHECK(one[0].start == 0);
  CHECK(one[0].end == 5);

  auto steps = macro_steps(t, Segmentation{{2, 4, 5}});
  REQUIRE(steps.size() == 3);
  CHECK(steps[0].state_len == 3);
  CHECK(steps[1].state_len == 5);
  CHECK(steps[2].state_len == 7);

  CHECK_THROWS_AS(macro_steps(t, Segmentation{{2, 2, 5}}), DomainError);
  CHECK_THROWS_AS(macro_steps(t, Segmentation{{2, 4}}), DomainError);
}

TEST_CASE("every strategy tiles random outputs") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto t = traj_of(gpg::testing::random_tokens(rng, 1 + rng.below(9), 5),
                     gpg::testing::random_tokens(rng, rng.below(3), 5));
    for (auto& h : t.entropies) h = rng.uniform();
    Segmenter markers = Segmenter::parse("markers");
    markers.markers = {static_cast<Token>(rng.below(5))};
    Segmenter entropy = Segmenter::parse("entropy");
    entropy.threshold = rng.uniform();
    Segmenter random = Segmenter::parse("random");
    random.seed = trial;
    for (const Segmenter& s : {Segmenter::parse("full"), Segmenter::parse("tokens"), markers, entropy,
                               Segmenter::parse("entropy_quantile"), Segmenter::parse("fixed(3)"), random}) {
      auto seg = s(t);
      check_tiling(t, seg);
      CHECK(s(t) == seg);
    }
  }
}

TEST_CASE("Segmenter parsing") {
  CHECK(Segmenter::parse("fixed(4)").k == 4);
  CHECK(Segmenter::parse("fixed(4)").name() == "fixed(4)");
  CHECK_THROWS_AS(Segmenter::parse("fixed(0)"), ConfigError);
  CHECK_THROWS_AS(Segmenter::parse("fixed(x)"), ConfigError);
  CHECK_THROWS_AS(Segmenter::parse("paragraphs"), ConfigError);
  // fixed(K) clamps to the output length inside the configured segmenter.
  CHECK(Segmenter::parse("fixed(9)")(traj_of({1, 2})).boundaries == B{1, 2});
  CHECK(Segmenter::parse("full")(traj_of({})).K() == 0);
}
