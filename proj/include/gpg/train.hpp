#pragma once

// The training loop: sample, segment, beam, score, credit, update.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gpg/config.hpp"
#include "gpg/metrics.hpp"
#include "gpg/optim.hpp"

namespace gpg {

struct IterationStats {
  MetricsRecord record;
  // Batch means of the task's reward components.
  std::map<std::string, double> components;
};

/// Return false to stop after this iteration.
using TrainObserver = std::function<bool(const IterationStats&, const ParamVector&)>;

struct TrainResult {
  std::vector<MetricsRecord> history;
  ParamVector params;
  AdamState adam;
};

/// Builds one iteration's batch: for each query a beam tree of M root
/// rollouts expanded per the schedule, with per-group credit.
Batch sample_batch(const RunConfig& config, const ParamVector& params, std::uint64_t iteration);

/// Runs config.iters iterations from ParamVector::random(shape, seed).
/// When config.out is set, writes metrics.jsonl, params.bin and adam.bin
/// there. A non-finite gradient leaves the parameters of that iteration
/// untouched and aborts the run with NumericError.
TrainResult train(const RunConfig& config, const TrainObserver& observer = {});

struct Evaluation {
  double mean_reward = 0.0;
  std::map<std::string, double> components;
};

/// Mean reward and components over `samples` fresh rollouts (new query each).
Evaluation evaluate(const ParamVector& params, const RunConfig& config, std::size_t samples, std::uint64_t seed);

}  // namespace gpg
