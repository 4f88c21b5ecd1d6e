// gpg: train, verify, enumerate, bench.
//
// Exit status: 0 success, 1 verification or runtime failure, 2 usage or
// configuration error.

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gpg/bench.hpp"
#include "gpg/config.hpp"
#include "gpg/errors.hpp"
#include "gpg/oracle.hpp"
#include "gpg/parallel.hpp"
#include "gpg/snapshot.hpp"
#include "gpg/train.hpp"
#include "gpg/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

int run_train(const std::string& path, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
  gpg::RunConfig config = gpg::resolve_config(gpg::read_config_file(path));
  if (seed) config.seed = *seed;
  if (out) config.out = *out;
  const std::uint64_t every = std::max<std::uint64_t>(1, config.iters / 20);
  const auto result = gpg::train(config, [&](const gpg::IterationStats& s, const gpg::ParamVector&) {
    const auto& r = s.record;
    if (r.iteration % every == 0 || r.iteration + 1 == config.iters) {
      std::printf("iter %6llu  reward %.4f  loss %+.5f  |g| %.4g  clip %.3f  kl %.3g\n",
                  static_cast<unsigned long long>(r.iteration), r.mean_reward, r.loss, r.grad_norm, r.clip_fraction,
                  r.kl_to_old);
    }
    return true;
  });
  std::printf("done: %zu iterations, algo %s, task %s", result.history.size(), gpg::to_string(config.algo).c_str(),
              config.task.name.c_str());
  if (!config.out.empty()) std::printf(", outputs in %s", config.out.c_str());
  std::printf("\n");
  return kOk;
}

int run_verify(const std::string& suite, std::uint64_t cap) {
  gpg::VerifyOptions opt;
  opt.cap = cap;
  const auto results = gpg::run_suite(suite, opt);
  std::size_t passed = 0;
  for (const auto& r : results) {
    std::printf("%s  %-24s %7.2fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds, r.detail.c_str());
    if (r.passed) ++passed;
  }
  std::printf("suite %s: %zu/%zu checks passed\n", suite.c_str(), passed, results.size());
  return passed == results.size() ? kOk : kFailure;
}

int run_enumerate(const std::string& task_name, std::uint32_t vocab, std::size_t horizon, std::uint64_t cap,
                  const std::string& params_path, std::uint64_t seed) {
  gpg::TaskConfig options{{"vocab", std::to_string(vocab)}, {"horizon", std::to_string(horizon)}};
  const gpg::TaskSpec task = gpg::make_task(task_name, options);
  const gpg::ParamVector params =
      params_path.empty() ? gpg::ParamVector::zeros(gpg::table_shape(vocab, 1)) : gpg::load_snapshot(params_path);
  if (params.shape.vocab != vocab) {
    throw gpg::ConfigError("snapshot vocabulary " + std::to_string(params.shape.vocab) + " does not match --vocab");
  }
  gpg::Rng rng(gpg::derive_seed(seed, "query", 0));
  const gpg::TokenSeq input = gpg::sample_query(task, rng);
  const auto space = gpg::enumerate_space(vocab, task.eos, horizon, cap);

  auto join = [](const gpg::TokenSeq& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
  };
  std::printf("task %s  V=%u  H=%zu  eos=%u  input=%s  policy=%s\n", task.name.c_str(), vocab, horizon, task.eos,
              join(input).c_str(), params_path.empty() ? "uniform" : params_path.c_str());
  double total = 0.0, objective = 0.0;
  for (const auto& o : space.outputs) {
    const double p = gpg::traj_prob(params, input, o);
    const double r = gpg::verify_reward(task, input, o).total;
    total += p;
    objective += p * r;
    std::printf("%-24s p=%.10g  reward=%g\n", join(o).c_str(), p, r);
  }
  std::printf("%zu trajectories  sum p=%.12g  J=%.12g\n", space.size(), total, objective);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized policy gradient toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite, task_name, params_path;
  std::uint64_t seed = 0, cap = gpg::kDefaultEnumerationCap, query_seed = 0;
  std::uint32_t vocab = 0;
  std::size_t horizon = 0;
  int repeats = 3;

  auto* train = app.add_subcommand("train", "run a training job from a config file");
  train->add_option("--config", config_path, "config file")->required();
  auto* seed_opt = train->add_option("--seed", seed, "override run.seed");
  auto* out_opt = train->add_option("--out", out_dir, "override run.out");

  auto* verify = app.add_subcommand("verify", "run a verification suite");
  verify->add_option("--suite", suite, "gpg | unbias | calib | grad")
      ->required()
      ->check(CLI::IsMember(gpg::suite_names()));
  verify->add_option("--cap", cap, "enumeration cap on (V-1)^H");

  auto* enumerate = app.add_subcommand("enumerate", "list the trajectory space with probabilities and rewards");
  enumerate->add_option("--task", task_name, "task name")->required();
  enumerate->add_option("--vocab", vocab, "vocabulary size")->required()->check(CLI::PositiveNumber);
  enumerate->add_option("--horizon", horizon, "horizon")->required();
  enumerate->add_option("--cap", cap, "enumeration cap on (V-1)^H");
  enumerate->add_option("--params", params_path, "parameter snapshot (default: uniform policy)");
  enumerate->add_option("--seed", query_seed, "seed for the query");

  auto* bench = app.add_subcommand("bench", "time serial against parallel kernels");
  bench->add_option("--repeats", repeats, "timings per kernel")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    gpg::parallel::configure_from_env();
    if (*train) {
      return run_train(config_path, *seed_opt ? std::optional(seed) : std::nullopt,
                       *out_opt ? std::optional(out_dir) : std::nullopt);
    }
    if (*verify) return run_verify(suite, cap);
    if (*enumerate) return run_enumerate(task_name, vocab, horizon, cap, params_path, query_seed);
    if (*bench) {
      std::fputs(gpg::format_bench(gpg::run_benchmarks(repeats)).c_str(), stdout);
      return kOk;
    }
  } catch (const gpg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
