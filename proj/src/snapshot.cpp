#include "gpg/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "gpg/errors.hpp"

namespace gpg {

namespace {

static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

class Writer {
 public:
  void magic(const char* m) { bytes.insert(bytes.end(), m, m + 4); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  std::vector<unsigned char> bytes;

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, const char* what) : bytes_(bytes), what_(what) {}

  void magic(const char* m) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) fail("bad magic");
    pos_ += 4;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void finish() const {
    if (pos_ != bytes_.size()) fail("trailing bytes");
  }
  [[noreturn]] void fail(const std::string& why) const { throw FormatError(std::string(what_) + ": " + why); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail("truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<unsigned char>& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace

std::vector<unsigned char> encode_params(const ParamVector& params) {
  params.shape.validate();
  if (params.values.size() != params.shape.param_count()) throw DomainError("parameter count does not match shape");
  Writer w;
  w.magic("GPGP");
  w.u32(kSnapshotVersion);
  w.u32(static_cast<std::uint32_t>(params.shape.backend));
  w.u32(params.shape.vocab);
  w.u32(params.shape.width);
  for (double v : params.values) w.f64(v);
  return std::move(w.bytes);
}

ParamVector decode_params(const std::vector<unsigned char>& bytes) {
  Reader r(bytes, "parameter snapshot");
  r.magic("GPGP");
  if (const auto version = r.u32(); version != kSnapshotVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  PolicyShape shape;
  const auto backend = r.u32();
  if (backend > 1) r.fail("unknown backend id " + std::to_string(backend));
  shape.backend = static_cast<Backend>(backend);
  shape.vocab = r.u32();
  shape.width = r.u32();
  try {
    shape.validate();
  } catch (const DomainError& e) {
    r.fail(std::string("bad shape: ") + e.what());
  }
  const std::size_t n = shape.param_count();
  if (r.remaining() / 8 < n) r.fail("truncated");
  ParamVector p = ParamVector::zeros(shape);
  for (auto& v : p.values) v = r.f64();
  r.finish();
  return p;
}

std::vector<unsigned char> encode_adam(const AdamState& state) {
  if (state.m.size() != state.v.size()) throw DomainError("Adam moments differ in size");
  Writer w;
  w.magic("GPGA");
  w.u32(kSnapshotVersion);
  w.u64(state.step);
  w.u64(state.m.size());
  for (double v : state.m) w.f64(v);
  for (double v : state.v) w.f64(v);
  return std::move(w.bytes);
}

AdamState decode_adam(const std::vector<unsigned char>& bytes) {
  Reader r(bytes, "optimizer state");
  r.magic("GPGA");
  if (const auto version = r.u32(); version != kSnapshotVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  AdamState s;
  s.step = r.u64();
  const std::uint64_t n = r.u64();
  if (r.remaining() / 16 < n) r.fail("truncated");
  s.m.resize(n);
  s.v.resize(n);
  for (auto& v : s.m) v = r.f64();
  for (auto& v : s.v) v = r.f64();
  r.finish();
  return s;
}

void save_snapshot(const ParamVector& params, const std::string& path) { write_file(path, encode_params(params)); }
ParamVector load_snapshot(const std::string& path) { return decode_params(read_file(path)); }
void save_adam(const AdamState& state, const std::string& path) { write_file(path, encode_adam(state)); }
AdamState load_adam(const std::string& path) { return decode_adam(read_file(path)); }

}  // namespace gpg
