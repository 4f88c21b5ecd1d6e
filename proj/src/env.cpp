#include "gpg/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gpg/errors.hpp"

namespace gpg {

namespace {

std::uint64_t get_uint(const TaskConfig& cfg, const std::string& key, std::uint64_t fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size() || v < 0) throw std::invalid_argument("");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("task." + key + " must be a non-negative integer, got '" + it->second + "'");
  }
}

double get_real(const TaskConfig& cfg, const std::string& key, double fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("task." + key + " must be a number, got '" + it->second + "'");
  }
}

std::set<Token> parse_markers(const std::string& text) {
  std::set<Token> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument("");
      out.insert(static_cast<Token>(v));
    } catch (const std::exception&) {
      throw ConfigError("task.markers must be a comma-separated list of token ids, got '" + text + "'");
    }
  }
  return out;
}

const std::set<std::string>& allowed_keys(TaskKind kind) {
  static const std::set<std::string> simple{"vocab", "horizon", "query_length", "eos", "markers"};
  static const std::set<std::string> tool{"vocab",          "horizon",       "query_length", "eos",
                                          "markers",        "answer_alphabet", "format_weight",
                                          "answer_weight"};
  return kind == TaskKind::ToolGrammar ? tool : simple;
}

bool ends_with_eos(const TaskSpec& task, std::span<const Token> output) {
  return !output.empty() && output.back() == task.eos;
}

bool is_digit(Token t, const TaskSpec& task) {
  return t >= tags::kFirstDigit && t < tags::kFirstDigit + task.answer_alphabet;
}

double format_score(const TaskSpec& task, std::span<const Token> out) {
  std::size_t i = 0;
  auto expect = [&](Token t) {
    if (i < out.size() && out[i] == t) {
      ++i;
      return true;
    }
    return false;
  };
  auto digits = [&] {
    while (i < out.size() && is_digit(out[i], task)) ++i;
  };
  if (!expect(tags::kThinkOpen)) return 0.0;
  digits();
  if (!expect(tags::kThinkClose) || !expect(tags::kToolOpen)) return 0.0;
  digits();
  if (!expect(tags::kToolClose) || !expect(tags::kAnswerOpen)) return 0.0;
  if (i >= out.size() || !is_digit(out[i], task)) return 0.0;
  ++i;
  if (!expect(tags::kAnswerClose) || !expect(task.eos)) return 0.0;
  return i == out.size() ? 1.0 : 0.0;
}

double answer_score(const TaskSpec& task, std::span<const Token> input, std::span<const Token> out) {
  std::uint64_t sum = 0;
  for (Token t : input) {
    if (is_digit(t, task)) sum += t - tags::kFirstDigit;
  }
  const Token expected = static_cast<Token>(tags::kFirstDigit + sum % task.answer_alphabet);
  auto it = std::find(out.begin(), out.end(), tags::kAnswerOpen);
  if (it == out.end() || it + 1 == out.end() || it + 2 == out.end()) return 0.0;
  return (*(it + 1) == expected && *(it + 2) == tags::kAnswerClose) ? 1.0 : 0.0;
}

}  // namespace

std::vector<Token> TaskSpec::query_alphabet() const {
  std::vector<Token> out;
  if (kind == TaskKind::ToolGrammar) {
    for (Token d = 0; d < answer_alphabet; ++d) out.push_back(tags::kFirstDigit + d);
    return out;
  }
  for (Token t = 0; t < vocab; ++t) {
    if (t != eos) out.push_back(t);
  }
  return out;
}

TaskSpec make_task(const std::string& name, const TaskConfig& config) {
  TaskSpec task;
  task.name = name;
  if (name == "parity") {
    task.kind = TaskKind::Parity;
  } else if (name == "copy") {
    task.kind = TaskKind::Copy;
  } else if (name == "reverse") {
    task.kind = TaskKind::Reverse;
  } else if (name == "toolgrammar") {
    task.kind = TaskKind::ToolGrammar;
  } else {
    throw ConfigError("unknown task '" + name + "' (expected parity, copy, reverse or toolgrammar)");
  }
  for (const auto& [key, value] : config) {
    if (!allowed_keys(task.kind).count(key)) {
      throw ConfigError("unknown key task." + key + " for task " + name);
    }
  }

  switch (task.kind) {
    case TaskKind::Parity:
      task.vocab = static_cast<std::uint32_t>(get_uint(config, "vocab", 3));
      task.query_length = get_uint(config, "query_length", 0);
      task.horizon = get_uint(config, "horizon", 6);
      task.eos = static_cast<Token>(get_uint(config, "eos", task.vocab - 1));
      break;
    case TaskKind::Copy:
    case TaskKind::Reverse:
      task.vocab = static_cast<std::uint32_t>(get_uint(config, "vocab", 4));
      task.query_length = get_uint(config, "query_length", 3);
      task.horizon = get_uint(config, "horizon", task.query_length + 1);
      task.eos = static_cast<Token>(get_uint(config, "eos", task.vocab - 1));
      break;
    case TaskKind::ToolGrammar: {
      task.answer_alphabet = static_cast<std::uint32_t>(get_uint(config, "answer_alphabet", 3));
      if (task.answer_alphabet < 1) throw ConfigError("task.answer_alphabet must be >= 1");
      task.vocab = tags::kFirstDigit + task.answer_alphabet;
      if (get_uint(config, "vocab", task.vocab) != task.vocab) {
        throw ConfigError("task.vocab for toolgrammar must equal 7 + answer_alphabet = " +
                          std::to_string(task.vocab));
      }
      if (get_uint(config, "eos", tags::kEos) != tags::kEos) {
        throw ConfigError("toolgrammar EOS id is fixed at 6");
      }
      task.eos = tags::kEos;
      task.query_length = get_uint(config, "query_length", 2);
      task.horizon = get_uint(config, "horizon", 12);
      task.markers = {tags::kThinkClose, tags::kToolClose};
      task.format_weight = get_real(config, "format_weight", 0.5);
      task.answer_weight = get_real(config, "answer_weight", 0.5);
      if (task.format_weight < 0 || task.answer_weight < 0 ||
          std::abs(task.format_weight + task.answer_weight - 1.0) > 1e-12) {
        throw ConfigError("toolgrammar weights must be non-negative and sum to 1");
      }
      break;
    }
  }
  if (auto it = config.find("markers"); it != config.end()) task.markers = parse_markers(it->second);

  if (task.vocab < 2) throw ConfigError("task.vocab must be >= 2");
  if (task.eos >= task.vocab) {
    throw ConfigError("eos id " + std::to_string(task.eos) + " must be < vocab " + std::to_string(task.vocab));
  }
  for (Token m : task.markers) {
    if (m >= task.vocab) throw ConfigError("marker id " + std::to_string(m) + " must be < vocab");
  }
  if (task.horizon < 1) throw ConfigError("task.horizon must be >= 1");
  return task;
}

TokenSeq sample_query(const TaskSpec& task, Rng& rng) {
  const auto alphabet = task.query_alphabet();
  TokenSeq q(task.query_length);
  for (auto& t : q) t = alphabet[rng.below(alphabet.size())];
  return q;
}

RewardReport verify_reward(const TaskSpec& task, std::span<const Token> input,
                           std::span<const Token> output) {
  RewardReport report;
  const double terminated = ends_with_eos(task, output) ? 1.0 : 0.0;
  switch (task.kind) {
    case TaskKind::Parity: {
      std::uint64_t sum = 0;
      for (Token t : output) {
        if (t != task.eos) sum += t;
      }
      const double even = sum % 2 == 0 ? 1.0 : 0.0;
      report.components = {{"even", even}, {"terminated", terminated}};
      report.total = even * terminated;
      break;
    }
    case TaskKind::Copy:
    case TaskKind::Reverse: {
      const std::size_t n = input.size();
      const std::size_t body = output.size() - static_cast<std::size_t>(terminated);
      double match = 1.0;
      if (n > 0) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < std::min(n, body); ++i) {
          const Token want = task.kind == TaskKind::Copy ? input[i] : input[n - 1 - i];
          if (output[i] == want) ++hits;
        }
        match = static_cast<double>(hits) / static_cast<double>(n);
      }
      report.components = {{"match", match}, {"terminated", terminated}};
      report.total = match * terminated;
      break;
    }
    case TaskKind::ToolGrammar: {
      const double fmt = format_score(task, output);
      const double ans = answer_score(task, input, output);
      report.components = {{"format", fmt}, {"answer", ans}};
      report.total = task.format_weight * fmt + task.answer_weight * ans;
      break;
    }
  }
  return report;
}

void score(const TaskSpec& task, Trajectory& traj) {
  traj.reward = verify_reward(task, traj.input, traj.output).total;
}

}  // namespace gpg
