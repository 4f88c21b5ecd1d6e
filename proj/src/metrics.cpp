#include "gpg/metrics.hpp"

#include <filesystem>

#include "gpg/errors.hpp"
#include "json.hpp"

namespace gpg {

namespace {

constexpr const char* kKeys[] = {"iteration", "mean_reward", "loss",   "grad_norm", "clip_fraction",
                                 "mean_ratio", "kl_to_old",  "leaves", "wall_ms"};

}  // namespace

std::string emit_metrics(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["mean_reward"] = r.mean_reward;
  j["loss"] = r.loss;
  j["grad_norm"] = r.grad_norm;
  j["clip_fraction"] = r.clip_fraction;
  j["mean_ratio"] = r.mean_ratio;
  j["kl_to_old"] = r.kl_to_old;
  j["leaves"] = r.leaves;
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

MetricsRecord parse_metrics(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics line is not JSON: ") + e.what());
  }
  if (!j.is_object() || j.size() != std::size(kKeys)) throw FormatError("metrics record has the wrong key set");
  MetricsRecord r;
  try {
    r.iteration = j.at("iteration").get<std::uint64_t>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.loss = j.at("loss").get<double>();
    r.grad_norm = j.at("grad_norm").get<double>();
    r.clip_fraction = j.at("clip_fraction").get<double>();
    r.mean_ratio = j.at("mean_ratio").get<double>();
    r.kl_to_old = j.at("kl_to_old").get<double>();
    r.leaves = j.at("leaves").get<std::uint64_t>();
    r.wall_ms = j.at("wall_ms").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad metrics record: ") + e.what());
  }
  return r;
}

std::vector<MetricsRecord> read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics file '" + path + "'");
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_metrics(line));
  }
  return out;
}

MetricsWriter::MetricsWriter(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory '" + dir + "': " + ec.message());
  path_ = (std::filesystem::path(dir) / "metrics.jsonl").string();
  out_.open(path_, std::ios::out | std::ios::trunc | std::ios::binary);
  if (!out_) throw IoError("cannot open '" + path_ + "' for writing");
}

void MetricsWriter::write(const MetricsRecord& record) {
  out_ << emit_metrics(record) << '\n';
  out_.flush();
  if (!out_) throw IoError("write to '" + path_ + "' failed");
}

}  // namespace gpg
