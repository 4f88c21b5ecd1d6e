#include "gpg/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "gpg/beam.hpp"
#include "gpg/oracle.hpp"
#include "gpg/optim.hpp"

namespace gpg {

namespace {

double best_ms(int repeats, const std::function<void()>& fn) {
  double best = INFINITY;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  return best;
}

double diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Times fn(Exec) in both modes; fn returns the output vector to compare.
BenchResult bench(const std::string& name, int repeats, const std::function<std::vector<double>(Exec)>& fn) {
  BenchResult r;
  r.kernel = name;
  r.threads = parallel::max_threads();
  std::vector<double> serial, par;
  r.serial_ms = best_ms(repeats, [&] { serial = fn(Exec::Serial); });
  r.parallel_ms = best_ms(repeats, [&] { par = fn(Exec::Parallel); });
  r.max_abs_diff = diff(serial, par);
  return r;
}

Batch sampled_batch(const ParamVector& params, const TaskSpec& task, std::size_t n) {
  Batch b;
  Rng rng(7);
  const TokenSeq input = sample_query(task, rng);
  BeamTree tree = init_root(task, input, n, params, rng, Segmenter::parse("tokens"));
  b.trajectories = tree.leaves();
  for (const auto& leaf : tree.leaf_records()) b.segmentations.push_back(leaf.seg);
  b.advantages = credit_table(b.trajectories, PhiMode::Grpo);
  b.old_params = params;
  return b;
}

}  // namespace

std::vector<BenchResult> run_benchmarks(int repeats) {
  std::vector<BenchResult> out;
  const TaskSpec parity = make_task("parity", {{"vocab", "4"}, {"horizon", "7"}});
  const ParamVector table = ParamVector::random(table_shape(4, 2), 1, 1.0);
  Segmenter markers = Segmenter::parse("markers");
  markers.markers = {0};

  out.push_back(bench("exact_objective  table V=4 H=7", repeats, [&](Exec e) {
    return std::vector<double>{exact_objective(table, parity, {}, 7, kDefaultEnumerationCap, e)};
  }));
  out.push_back(bench("exact_gpg_expect table V=4 H=7", repeats, [&](Exec e) {
    return exact_gpg_expectation(table, parity, {}, 7, markers, credit_total_reward(), kDefaultEnumerationCap, e)
        .values;
  }));

  const TaskSpec tool = make_task("toolgrammar");
  const ParamVector attn = ParamVector::random(attention_shape(tool.vocab, 16), 2, 0.5);
  out.push_back(bench("rollouts         attn  M=256", repeats, [&](Exec e) {
    Rng rng(3);
    BeamTree tree = init_root(tool, sample_query(tool, rng), 256, attn, rng, markers, 1.0, e);
    std::vector<double> rewards;
    for (const auto& t : tree.leaves()) rewards.push_back(t.reward + static_cast<double>(t.output.size()));
    return rewards;
  }));
  const Batch batch = sampled_batch(attn, tool, 256);
  out.push_back(bench("gpg_gradient     attn  n=256", repeats, [&](Exec e) {
    return gpg_gradient(attn, batch, MacroPhiMode::Mean, e).values;
  }));
  out.push_back(bench("clipped_surrogate attn n=256", repeats, [&](Exec e) {
    return clipped_surrogate(attn, batch, kDefaultEpsClip, MacroPhiMode::Mean, e).grad.values;
  }));
  return out;
}

std::string format_bench(const std::vector<BenchResult>& results) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof line, "%-32s %12s %12s %8s %8s %12s\n", "kernel", "serial ms", "parallel ms", "threads",
                "speedup", "max |diff|");
  s += line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-32s %12.3f %12.3f %8d %8.2f %12.3g\n", r.kernel.c_str(), r.serial_ms,
                  r.parallel_ms, r.threads, r.serial_ms / r.parallel_ms, r.max_abs_diff);
    s += line;
  }
  return s;
}

}  // namespace gpg
