#include "gpg/train.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>

#include "gpg/beam.hpp"
#include "gpg/errors.hpp"
#include "gpg/snapshot.hpp"

namespace gpg {

Batch sample_batch(const RunConfig& config, const ParamVector& params, std::uint64_t iteration) {
  Batch batch;
  batch.old_params = params;
  for (std::size_t q = 0; q < config.queries; ++q) {
    const std::uint64_t index = iteration * config.queries + q;
    Rng query_rng(derive_seed(config.seed, "query", index));
    const TokenSeq input = sample_query(config.task, query_rng);
    Rng rng(derive_seed(config.seed, "rollout", index));
    BeamTree tree = init_root(config.task, input, config.rollouts, params, rng, config.segmenter, config.temperature);
    if (config.beam.n > 0) run_beaming(tree, config.beam, params, rng);

    std::vector<Trajectory> group = tree.leaves();
    AdvantageTable table = credit_table(group, config.phi, config.adv_eps);
    for (std::size_t i = 0; i < group.size(); ++i) {
      batch.segmentations.push_back(tree.leaf_records()[i].seg);
      batch.advantages.per_token.push_back(std::move(table.per_token[i]));
      if (!table.initial.empty()) batch.advantages.initial.push_back(table.initial[i]);
      batch.trajectories.push_back(std::move(group[i]));
    }
  }
  return batch;
}

TrainResult train(const RunConfig& config, const TrainObserver& observer) {
  TrainResult result;
  result.params = ParamVector::random(config.shape, derive_seed(config.seed, "init", 0), config.init_scale);
  result.adam = AdamState::zeros(result.params.size());

  std::unique_ptr<MetricsWriter> writer;
  if (!config.out.empty()) writer = std::make_unique<MetricsWriter>(config.out);

  for (std::uint64_t it = 0; it < config.iters; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const Batch batch = sample_batch(config, result.params, it);

    IterationStats stats;
    MetricsRecord& rec = stats.record;
    rec.iteration = it;
    rec.leaves = batch.size();
    for (const auto& t : batch.trajectories) {
      rec.mean_reward += t.reward;
      for (const auto& [name, value] : verify_reward(config.task, t.input, t.output).components) {
        stats.components[name] += value;
      }
    }
    if (batch.size()) {
      rec.mean_reward /= static_cast<double>(batch.size());
      for (auto& [name, value] : stats.components) value /= static_cast<double>(batch.size());
    }

    ParamVector params = result.params;
    AdamState adam = result.adam;
    auto apply = [&](const GradVector& grad) {
      if (config.optimizer == OptimizerKind::Adam) {
        adam_step(adam, params, grad, config.adam);
      } else {
        sgd_step(params, grad, config.adam.lr);
      }
    };
    try {
      if (config.estimator == Estimator::Vanilla) {
        for (std::size_t e = 0; e < config.epochs; ++e) {
          const GradVector grad = gpg_gradient(params, batch, config.macro_mode);
          if (e == 0) {
            const auto s = unclipped_surrogate(params, batch, config.macro_mode);
            rec.loss = s.report.loss;
            rec.grad_norm = grad.norm();
          }
          apply(grad);
        }
        rec.clip_fraction = 0.0;
        rec.mean_ratio = unclipped_surrogate(params, batch, config.macro_mode).report.mean_ratio;
      } else {
        for (std::size_t e = 0; e < config.epochs; ++e) {
          const SurrogateResult s = clipped_surrogate(params, batch, config.eps_clip, config.macro_mode);
          if (e == 0) {
            rec.loss = s.report.loss;
            rec.grad_norm = s.report.grad_norm;
          }
          rec.clip_fraction = s.report.clip_fraction;
          rec.mean_ratio = s.report.mean_ratio;
          apply(s.grad);
        }
      }
      rec.kl_to_old = kl_to_old(params, batch);
    } catch (const NumericError& e) {
      std::cerr << "iteration " << it << " aborted: " << e.what() << '\n';
      throw;
    }
    result.params = std::move(params);
    result.adam = std::move(adam);

    if (config.wall_clock) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    result.history.push_back(rec);
    if (writer) writer->write(rec);
    if (observer && !observer(stats, result.params)) break;
  }

  if (!config.out.empty()) {
    save_snapshot(result.params, (std::filesystem::path(config.out) / "params.bin").string());
    save_adam(result.adam, (std::filesystem::path(config.out) / "adam.bin").string());
  }
  return result;
}

Evaluation evaluate(const ParamVector& params, const RunConfig& config, std::size_t samples, std::uint64_t seed) {
  Evaluation ev;
  if (samples == 0) return ev;
  std::vector<RewardReport> reports(samples);
  parallel::for_each_index(samples, [&](std::size_t i) {
    Rng rng(derive_seed(seed, "eval", i));
    const TokenSeq input = sample_query(config.task, rng);
    const Trajectory t = rollout(params, input, config.task.horizon, config.task.eos, rng, config.temperature);
    reports[i] = verify_reward(config.task, t.input, t.output);
  });
  for (const auto& r : reports) {
    ev.mean_reward += r.total;
    for (const auto& [name, value] : r.components) ev.components[name] += value;
  }
  ev.mean_reward /= static_cast<double>(samples);
  for (auto& [name, value] : ev.components) value /= static_cast<double>(samples);
  return ev;
}

}  // namespace gpg
