#pragma once

// Synthetic token tasks with rule-based terminal rewards.
//
// Task reference (config keys in brackets, defaults after '='):
//
//   parity       [vocab=3, horizon=6, query_length=0, eos=vocab-1]
//                Reward 1 iff the output ends with EOS and the non-EOS output
//                tokens have an even sum.
//   copy/reverse [vocab=4, query_length=3, horizon=query_length+1, eos=vocab-1]
//                Reward = (matching positions before EOS) / query_length,
//                times 1{output ends with EOS}. reverse targets the reversed
//                query.
//   toolgrammar  [answer_alphabet=3, query_length=2, horizon=12,
//                 format_weight=0.5, answer_weight=0.5]
//                Fixed tag ids:
//                  0 THINK_OPEN   1 THINK_CLOSE  2 TOOL_OPEN  3 TOOL_CLOSE
//                  4 ANSWER_OPEN  5 ANSWER_CLOSE 6 EOS
//                Digits 7 .. 7+answer_alphabet-1; vocab = 7 + answer_alphabet.
//                Format: THINK_OPEN digit* THINK_CLOSE TOOL_OPEN digit*
//                TOOL_CLOSE ANSWER_OPEN digit ANSWER_CLOSE EOS.
//                Answer: the digit after the first ANSWER_OPEN (which must be
//                followed by ANSWER_CLOSE) equals sum(query digits) mod
//                answer_alphabet. Markers: {THINK_CLOSE, TOOL_CLOSE}.
//
// Every task also accepts `markers` (comma-separated ids) to override the
// marker set.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gpg/policy.hpp"

namespace gpg {

enum class TaskKind { Parity, Copy, Reverse, ToolGrammar };

namespace tags {
inline constexpr Token kThinkOpen = 0;
inline constexpr Token kThinkClose = 1;
inline constexpr Token kToolOpen = 2;
inline constexpr Token kToolClose = 3;
inline constexpr Token kAnswerOpen = 4;
inline constexpr Token kAnswerClose = 5;
inline constexpr Token kEos = 6;
inline constexpr Token kFirstDigit = 7;
}  // namespace tags

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::Parity;
  std::uint32_t vocab = 3;
  Token eos = 2;
  std::set<Token> markers;
  std::size_t horizon = 6;
  std::size_t query_length = 0;
  // toolgrammar only
  std::uint32_t answer_alphabet = 0;
  double format_weight = 0.5;
  double answer_weight = 0.5;

  /// Tokens a query may contain.
  std::vector<Token> query_alphabet() const;
};

struct RewardReport {
  double total = 0.0;
  std::map<std::string, double> components;
};

using TaskConfig = std::map<std::string, std::string>;

TaskSpec make_task(const std::string& name, const TaskConfig& config = {});
TokenSeq sample_query(const TaskSpec& task, Rng& rng);
RewardReport verify_reward(const TaskSpec& task, std::span<const Token> input,
                           std::span<const Token> output);

/// Stamps traj.reward from verify_reward.
void score(const TaskSpec& task, Trajectory& traj);

}  // namespace gpg
