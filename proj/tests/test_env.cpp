#include "doctest.h"
#include "gpg/env.hpp"
#include "gpg/errors.hpp"
#include "test_util.hpp"

using namespace gpg;
using namespace gpg::tags;

TEST_CASE("make_task defaults") {
  auto parity = make_task("parity", {{"vocab", "3"}, {"horizon", "6"}});
  CHECK(parity.eos == 2);
  CHECK(parity.markers.empty());
  CHECK(parity.horizon == 6);

  auto tool = make_task("toolgrammar");
  CHECK(tool.markers == std::set<Token>{kThinkClose, kToolClose});
  CHECK(tool.vocab == 10);
  CHECK(tool.eos == kEos);

  auto copy = make_task("copy");
  CHECK(copy.horizon == copy.query_length + 1);
}

TEST_CASE("make_task rejections") {
  CHECK_THROWS_AS(make_task("nosuchtask"), ConfigError);
  CHECK_THROWS_AS(make_task("parity", {{"vocab", "3"}, {"eos", "3"}}), ConfigError);
  CHECK_THROWS_AS(make_task("parity", {{"vocab", "three"}}), ConfigError);
  CHECK_THROWS_AS(make_task("parity", {{"colour", "blue"}}), ConfigError);
  CHECK_THROWS_AS(make_task("parity", {{"markers", "0,7"}}), ConfigError);
  CHECK_THROWS_AS(make_task("toolgrammar", {{"vocab", "12"}}), ConfigError);
  CHECK_THROWS_AS(make_task("toolgrammar", {{"format_weight", "0.7"}}), ConfigError);
  CHECK_THROWS_AS(make_task("parity", {{"horizon", "0"}}), ConfigError);
}

TEST_CASE("markers override") {
  auto t = make_task("parity", {{"vocab", "4"}, {"markers", "0, 1"}});
  CHECK(t.markers == std::set<Token>{0, 1});
}

TEST_CASE("sample_query") {
  auto parity = make_task("parity");
  Rng rng(1);
  CHECK(sample_query(parity, rng).empty());

  auto copy = make_task("copy", {{"query_length", "3"}});
  for (int i = 0; i < 50; ++i) {
    auto q = sample_query(copy, rng);
    REQUIRE(q.size() == 3);
    for (Token t : q) {
      CHECK(t < copy.vocab);
      CHECK(t != copy.eos);
    }
  }
  Rng a(42), b(42);
  CHECK(sample_query(copy, a) == sample_query(copy, b));

  auto tool = make_task("toolgrammar");
  for (Token t : sample_query(tool, rng)) CHECK(t >= kFirstDigit);
}

TEST_CASE("parity rewards") {
  auto t = make_task("parity", {{"vocab", "3"}, {"horizon", "6"}});
  CHECK(verify_reward(t, {}, TokenSeq{0, 0, 2}).total == 1.0);
  CHECK(verify_reward(t, {}, TokenSeq{0, 0}).total == 0.0);
  CHECK(verify_reward(t, {}, TokenSeq{1, 0, 2}).total == 0.0);
  CHECK(verify_reward(t, {}, TokenSeq{1, 1, 2}).total == 1.0);
  CHECK(verify_reward(t, {}, TokenSeq{2}).total == 1.0);
}

TEST_CASE("copy and reverse rewards") {
  auto copy = make_task("copy");
  const TokenSeq q{0, 1, 2};
  CHECK(verify_reward(copy, q, TokenSeq{0, 1, 2, 3}).total == 1.0);
  CHECK(verify_reward(copy, q, TokenSeq{0, 1, 2}).total == 0.0);
  CHECK(verify_reward(copy, q, TokenSeq{0, 2, 3}).total == doctest::Approx(1.0 / 3.0));
  auto rev = make_task("reverse");
  CHECK(verify_reward(rev, q, TokenSeq{2, 1, 0, 3}).total == 1.0);
  CHECK(verify_reward(rev, q, TokenSeq{0, 1, 2, 3}).total == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("toolgrammar rewards") {
  auto t = make_task("toolgrammar");
  const TokenSeq q{kFirstDigit + 1, kFirstDigit + 2};  // (1 + 2) mod 3 = 0
  const Token right = kFirstDigit + 0, wrong = kFirstDigit + 1;
  const TokenSeq good{kThinkOpen, kFirstDigit, kThinkClose, kToolOpen, kToolClose,
                      kAnswerOpen, right,      kAnswerClose, kEos};
  auto r = verify_reward(t, q, good);
  CHECK(r.total == 1.0);
  CHECK(r.components.at("format") == 1.0);

  TokenSeq wrong_answer = good;
  wrong_answer[6] = wrong;
  CHECK(verify_reward(t, q, wrong_answer).total == 0.5);

  // Unformatted but with a correct answer span.
  const TokenSeq bare{kAnswerOpen, right, kAnswerClose, kEos};
  auto b = verify_reward(t, q, bare);
  CHECK(b.components.at("format") == 0.0);
  CHECK(b.total == 0.5);

  TokenSeq no_eos(good.begin(), good.end() - 1);
  CHECK(verify_reward(t, q, no_eos).components.at("format") == 0.0);
}

TEST_CASE("rewards are pure and bounded") {
  Rng rng(3);
  for (const char* name : {"parity", "copy", "reverse", "toolgrammar"}) {
    auto t = make_task(name);
    for (int i = 0; i < 500; ++i) {
      auto q = sample_query(t, rng);
      auto out = gpg::testing::random_tokens(rng, rng.below(t.horizon + 1), t.vocab);
      auto a = verify_reward(t, q, out);
      auto b = verify_reward(t, q, out);
      CHECK(a.total == b.total);
      CHECK(a.components == b.components);
      CHECK(a.total >= 0.0);
      CHECK(a.total <= 1.0);
      for (const auto& [k, v] : a.components) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}
