#pragma once

// One JSON object per line, one line per training iteration.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace gpg {

struct MetricsRecord {
  std::uint64_t iteration = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 1.0;
  double kl_to_old = 0.0;
  std::uint64_t leaves = 0;
  double wall_ms = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// Single line without the trailing newline. Doubles round-trip exactly.
std::string emit_metrics(const MetricsRecord& record);
/// Throws FormatError on malformed input or missing/extra keys.
MetricsRecord parse_metrics(const std::string& line);
std::vector<MetricsRecord> read_metrics_file(const std::string& path);

/// Appends newline-terminated records to `dir/metrics.jsonl` (created,
/// truncated). Throws IoError when the file cannot be written.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& dir);
  void write(const MetricsRecord& record);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace gpg
