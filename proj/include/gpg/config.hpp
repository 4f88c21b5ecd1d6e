#pragma once

// Run configuration: INI-style text, `key = value` lines under optional
// `[section]` headers. A key `k` inside `[s]` is the same as a top-level
// `s.k`. Comments start with '#' or ';'. The full key reference is in the
// README.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "gpg/beam.hpp"
#include "gpg/credit.hpp"
#include "gpg/env.hpp"
#include "gpg/optim.hpp"
#include "gpg/policy.hpp"
#include "gpg/segmentation.hpp"

namespace gpg {

enum class Algo { Arpo, Grpo, PpoToken, PgToken, Reinforce };
enum class Estimator { Clipped, Vanilla };
enum class OptimizerKind { Sgd, Adam };

Algo parse_algo(const std::string& text);
std::string to_string(Algo algo);

struct RunConfig {
  Algo algo = Algo::Arpo;
  TaskSpec task = make_task("toolgrammar");

  PolicyShape shape = table_shape(task.vocab);
  double init_scale = 0.05;
  double temperature = 1.0;

  Segmenter segmenter;  // resolved, markers filled from the task
  std::size_t rollouts = 4;
  BeamSchedule beam;

  PhiMode phi = PhiMode::Calibrated;
  MacroPhiMode macro_mode = MacroPhiMode::Mean;
  double adv_eps = kAdvantageEps;

  Estimator estimator = Estimator::Clipped;
  double eps_clip = kDefaultEpsClip;
  std::size_t epochs = 2;
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamConfig adam;  // adam.lr is the learning rate for both optimizers
  std::size_t iters = 100;
  std::size_t queries = 1;

  std::uint64_t seed = 0;
  std::string out;
  bool wall_clock = false;
};

/// Flattened `key -> value` pairs in file order of first appearance.
using RawConfig = std::map<std::string, std::string>;

RawConfig parse_config_text(const std::string& text);
/// Throws ConfigError for a missing or unreadable file.
RawConfig read_config_file(const std::string& path);

/// Validates every key and resolves algorithm presets. Explicit keys that
/// contradict a fixed preset (anything but arpo) are errors.
RunConfig resolve_config(const RawConfig& raw);
inline RunConfig parse_config(const std::string& text) { return resolve_config(parse_config_text(text)); }

}  // namespace gpg
