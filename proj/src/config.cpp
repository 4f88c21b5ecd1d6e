#include "gpg/config.hpp"

#include <cerrno>
#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>

#include "gpg/errors.hpp"

namespace gpg {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "algo",           "phi",           "segmentation",       "eps_clip",           "epochs",
      "lr",             "optimizer",     "iters",              "rollouts.M",         "beam.N",
      "beam.leaf_budget", "beam.rounds", "batch.queries",      "task.name",          "policy.backend",
      "policy.vocab",   "policy.context", "policy.width",      "policy.init_scale",  "policy.temperature",
      "segmentation.threshold", "segmentation.quantile", "segmentation.seed", "credit.macro_mode", "credit.eps",
      "optim.beta1",    "optim.beta2",   "optim.adam_eps",     "run.seed",           "run.out",
      "run.wall_clock"};
  return keys;
}

class Reader {
 public:
  explicit Reader(const RawConfig& raw) : raw_(raw) {}

  bool has(const std::string& key) const { return raw_.count(key) != 0; }
  std::optional<std::string> text(const std::string& key) const {
    auto it = raw_.find(key);
    if (it == raw_.end()) return std::nullopt;
    return it->second;
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) const {
    auto v = text(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto* end = v->data() + v->size();
    auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || ptr != end) fail(key, *v, "a non-negative integer");
    if (out < min) fail(key, *v, "an integer >= " + std::to_string(min));
    return out;
  }

  double real(const std::string& key, double fallback) const {
    auto v = text(key);
    if (!v) return fallback;
    char* end = nullptr;
    errno = 0;
    const double out = std::strtod(v->c_str(), &end);
    if (v->empty() || end != v->c_str() + v->size() || errno == ERANGE || !std::isfinite(out)) {
      fail(key, *v, "a finite number");
    }
    return out;
  }

  bool boolean(const std::string& key, bool fallback) const {
    auto v = text(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    fail(key, *v, "true or false");
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("config key '" + key + "' = '" + value + "': expected " + expected);
  }

 private:
  const RawConfig& raw_;
};

struct Preset {
  std::string segmentation;
  PhiMode phi;
  std::size_t beam_n;
  Estimator estimator;
  std::optional<std::size_t> epochs;
};

Preset preset_for(Algo algo) {
  switch (algo) {
    case Algo::Arpo: return {"markers", PhiMode::Calibrated, 2, Estimator::Clipped, std::nullopt};
    case Algo::Grpo: return {"full", PhiMode::Grpo, 0, Estimator::Clipped, std::nullopt};
    case Algo::PpoToken: return {"tokens", PhiMode::Grpo, 0, Estimator::Clipped, std::nullopt};
    case Algo::PgToken: return {"tokens", PhiMode::Total, 0, Estimator::Vanilla, 1};
    case Algo::Reinforce: return {"full", PhiMode::Total, 0, Estimator::Vanilla, 1};
  }
  return {};
}

}  // namespace

Algo parse_algo(const std::string& text) {
  if (text == "arpo") return Algo::Arpo;
  if (text == "grpo") return Algo::Grpo;
  if (text == "ppo_token") return Algo::PpoToken;
  if (text == "pg_token") return Algo::PgToken;
  if (text == "reinforce") return Algo::Reinforce;
  throw ConfigError("unknown algo '" + text + "' (expected arpo, grpo, ppo_token, pg_token or reinforce)");
}

std::string to_string(Algo algo) {
  switch (algo) {
    case Algo::Arpo: return "arpo";
    case Algo::Grpo: return "grpo";
    case Algo::PpoToken: return "ppo_token";
    case Algo::PgToken: return "pg_token";
    case Algo::Reinforce: return "reinforce";
  }
  return "?";
}

RawConfig parse_config_text(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty() || section.find_first_of(" \t.=") != std::string::npos) {
        throw ConfigError(where + "bad section name '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (!section.empty()) key = section + "." + key;
    if (!raw.emplace(key, value).second) throw ConfigError(where + "duplicate key '" + key + "'");
  }
  return raw;
}

RawConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

RunConfig resolve_config(const RawConfig& raw) {
  TaskConfig task_options;
  for (const auto& [key, value] : raw) {
    if (key.rfind("task.", 0) == 0 && key != "task.name") {
      task_options[key.substr(5)] = value;
    } else if (!known_keys().count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  Reader r(raw);
  RunConfig c;

  c.algo = parse_algo(r.text("algo").value_or("arpo"));
  c.task = make_task(r.text("task.name").value_or("toolgrammar"), task_options);

  // Policy.
  const std::string backend = r.text("policy.backend").value_or("table");
  const std::uint32_t vocab = c.task.vocab;
  if (r.has("policy.vocab") && r.u64("policy.vocab", 0) != vocab) {
    throw ConfigError("policy.vocab = " + *r.text("policy.vocab") + " does not match the task vocabulary " +
                      std::to_string(vocab));
  }
  if (backend == "table") {
    if (r.has("policy.width")) throw ConfigError("policy.width applies to the attention backend only");
    c.shape = table_shape(vocab, static_cast<std::uint32_t>(r.u64("policy.context", 2, 1)));
  } else if (backend == "attention") {
    if (r.has("policy.context")) throw ConfigError("policy.context applies to the table backend only");
    c.shape = attention_shape(vocab, static_cast<std::uint32_t>(r.u64("policy.width", 16, 1)));
    if (c.task.query_length + c.task.horizon + 1 > kMaxPositions) {
      throw ConfigError("query length plus horizon exceeds the attention position table (" +
                        std::to_string(kMaxPositions - 1) + ")");
    }
  } else {
    throw ConfigError("unknown policy.backend '" + backend + "' (expected table or attention)");
  }
  try {
    c.shape.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("policy: ") + e.what());
  }
  c.init_scale = r.real("policy.init_scale", 0.05);
  if (c.init_scale < 0.0) throw ConfigError("policy.init_scale must be >= 0");
  c.temperature = r.real("policy.temperature", 1.0);
  if (!(c.temperature > 0.0)) throw ConfigError("policy.temperature must be > 0");

  // Algorithm preset.
  const Preset preset = preset_for(c.algo);
  const bool fixed = c.algo != Algo::Arpo;
  auto conflict = [&](const std::string& key, const std::string& forced) {
    if (fixed && r.has(key) && *r.text(key) != forced) {
      throw ConfigError("algo = " + to_string(c.algo) + " fixes " + key + " = " + forced + ", got '" +
                        *r.text(key) + "'");
    }
  };
  conflict("segmentation", preset.segmentation);
  conflict("phi", to_string(preset.phi));
  conflict("beam.N", std::to_string(preset.beam_n));
  if (preset.epochs) conflict("epochs", std::to_string(*preset.epochs));

  c.segmenter = Segmenter::parse(r.text("segmentation").value_or(preset.segmentation));
  c.segmenter.markers = c.task.markers;
  c.segmenter.threshold = r.real("segmentation.threshold", c.segmenter.threshold);
  c.segmenter.quantile = r.real("segmentation.quantile", c.segmenter.quantile);
  if (!(c.segmenter.quantile > 0.0 && c.segmenter.quantile <= 1.0)) {
    throw ConfigError("segmentation.quantile must lie in (0, 1]");
  }
  c.segmenter.seed = r.u64("segmentation.seed", 0);
  c.phi = r.has("phi") ? parse_phi(*r.text("phi")) : preset.phi;
  c.estimator = preset.estimator;

  // Sampling and beaming.
  c.rollouts = r.u64("rollouts.M", 4, 1);
  c.beam.n = r.u64("beam.N", preset.beam_n);
  c.beam.rounds = r.u64("beam.rounds", c.beam.n == 0 ? 0 : 2);
  c.beam.leaf_budget = r.u64("beam.leaf_budget", c.rollouts + c.beam.n * c.beam.rounds, 1);
  if (c.beam.leaf_budget < c.rollouts) throw ConfigError("beam.leaf_budget must be >= rollouts.M");
  c.queries = r.u64("batch.queries", 1, 1);

  // Credit.
  if (r.has("credit.macro_mode")) c.macro_mode = parse_macro_phi(*r.text("credit.macro_mode"));
  c.adv_eps = r.real("credit.eps", kAdvantageEps);
  if (!(c.adv_eps > 0.0)) throw ConfigError("credit.eps must be > 0");

  // Optimization.
  c.eps_clip = r.real("eps_clip", kDefaultEpsClip);
  if (!(c.eps_clip > 0.0 && c.eps_clip < 1.0)) throw ConfigError("eps_clip must lie in (0, 1)");
  c.epochs = r.u64("epochs", preset.epochs.value_or(2), 1);
  const std::string opt = r.text("optimizer").value_or("adam");
  if (opt == "adam") {
    c.optimizer = OptimizerKind::Adam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::Sgd;
  } else {
    throw ConfigError("unknown optimizer '" + opt + "' (expected sgd or adam)");
  }
  c.adam.lr = r.real("lr", c.shape.backend == Backend::Attention ? 1e-3 : 1e-2);
  if (!(c.adam.lr > 0.0)) throw ConfigError("lr must be > 0");
  c.adam.beta1 = r.real("optim.beta1", 0.9);
  c.adam.beta2 = r.real("optim.beta2", 0.999);
  c.adam.eps = r.real("optim.adam_eps", 1e-8);
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0 && c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) {
    throw ConfigError("optim.beta1 and optim.beta2 must lie in [0, 1)");
  }
  if (!(c.adam.eps > 0.0)) throw ConfigError("optim.adam_eps must be > 0");
  c.iters = r.u64("iters", 100);

  c.seed = r.u64("run.seed", 0);
  c.out = r.text("run.out").value_or("");
  c.wall_clock = r.boolean("run.wall_clock", false);
  return c;
}

}  // namespace gpg
