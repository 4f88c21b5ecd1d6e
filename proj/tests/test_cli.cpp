#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "gpg/config.hpp"
#include "gpg/metrics.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string output;
};

Run gpg_cli(const std::string& args) {
  const std::string cmd = std::string(GPG_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gpg_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("enumerate prints the hand enumeration") {
  const Run r = gpg_cli("enumerate --task parity --vocab 2 --horizon 2");
  CHECK(r.status == 0);
  CHECK(r.output.find("[0,0]                    p=0.25  reward=0") != std::string::npos);
  CHECK(r.output.find("[0,1]                    p=0.25  reward=1") != std::string::npos);
  CHECK(r.output.find("[1]                      p=0.5  reward=1") != std::string::npos);
  CHECK(r.output.find("3 trajectories  sum p=1") != std::string::npos);

  const Run big = gpg_cli("enumerate --task parity --vocab 4 --horizon 20");
  CHECK(big.status == 1);
  CHECK(big.output.find("cap of at least 3486784401") != std::string::npos);
}

TEST_CASE("usage and config errors exit with 2") {
  CHECK(gpg_cli("").status == 2);
  CHECK(gpg_cli("frobnicate").status == 2);
  CHECK(gpg_cli("verify --suite nope").status == 2);
  CHECK(gpg_cli("train --config missing.cfg").status == 2);
  CHECK(gpg_cli("train").status == 2);
  CHECK(gpg_cli("enumerate --task chess --vocab 3 --horizon 2").status == 2);
  CHECK(gpg_cli("--help").status == 0);

  const auto dir = scratch("badcfg");
  std::ofstream(dir / "bad.cfg") << "algo = grpo\nsegmentation = markers\n";
  const Run r = gpg_cli("train --config " + (dir / "bad.cfg").string());
  CHECK(r.status == 2);
  CHECK(r.output.find("fixes segmentation") != std::string::npos);
}

TEST_CASE("verify suites pass") {
  const Run r = gpg_cli("verify --suite calib");
  CHECK(r.status == 0);
  CHECK(r.output.find("suite calib: 2/2 checks passed") != std::string::npos);
  CHECK(gpg_cli("verify --suite gpg --cap 10").status == 1);
}

TEST_CASE("train writes reproducible outputs independent of thread count") {
  const auto a = scratch("train_a");
  const auto b = scratch("train_b");
  std::ofstream(a / "run.cfg") << "algo = arpo\niters = 20\n[policy]\nbackend = attention\nwidth = 8\n";
  const Run ra = gpg_cli("train --config " + (a / "run.cfg").string() + " --seed 5 --out " + (a / "out").string());
  const Run rb = gpg_cli("train --config " + (a / "run.cfg").string() + " --seed 5 --out " + (b / "out").string());
  CHECK(ra.status == 0);
  CHECK(rb.status == 0);
  CHECK(slurp(a / "out" / "metrics.jsonl") == slurp(b / "out" / "metrics.jsonl"));
  CHECK(slurp(a / "out" / "params.bin") == slurp(b / "out" / "params.bin"));
  CHECK(gpg::read_metrics_file((a / "out" / "metrics.jsonl").string()).size() == 20);

  const auto c = scratch("train_c");
  const std::string cmd = "env GPG_THREADS=3 " + std::string(GPG_CLI_PATH) + " train --config " +
                          (a / "run.cfg").string() + " --seed 5 --out " + (c / "out").string() + " > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(slurp(a / "out" / "metrics.jsonl") == slurp(c / "out" / "metrics.jsonl"));
  CHECK(slurp(a / "out" / "params.bin") == slurp(c / "out" / "params.bin"));

  CHECK(gpg_cli("train --config " + (a / "run.cfg").string() + " --out /proc/gpg_denied").status == 1);
}

TEST_CASE("shipped configs are valid") {
  const gpg::RunConfig grpo = gpg::resolve_config(gpg::read_config_file(GPG_SOURCE_DIR "/configs/parity_grpo.cfg"));
  CHECK(grpo.algo == gpg::Algo::Grpo);
  CHECK(grpo.iters == 2000);
  const gpg::RunConfig arpo =
      gpg::resolve_config(gpg::read_config_file(GPG_SOURCE_DIR "/configs/toolgrammar_arpo.cfg"));
  CHECK(arpo.algo == gpg::Algo::Arpo);
  CHECK(arpo.shape.backend == gpg::Backend::Attention);
  CHECK(arpo.rollouts == 4);
  CHECK(arpo.beam.n == 2);
}
