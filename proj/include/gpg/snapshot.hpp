#pragma once

// Binary persistence, all integers and floats little-endian.
//
// Parameters:  "GPGP" u32 version=1, u32 backend, u32 V, u32 c|d, f64 values...
// Adam state:  "GPGA" u32 version=1, u64 step, u64 n, f64 m[n], f64 v[n]
//
// The value count is implied by the shape; trailing or missing bytes are
// format errors.

#include <string>
#include <vector>

#include "gpg/optim.hpp"
#include "gpg/policy.hpp"

namespace gpg {

inline constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<unsigned char> encode_params(const ParamVector& params);
ParamVector decode_params(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_adam(const AdamState& state);
AdamState decode_adam(const std::vector<unsigned char>& bytes);

/// IoError on filesystem failure, FormatError on content errors.
void save_snapshot(const ParamVector& params, const std::string& path);
ParamVector load_snapshot(const std::string& path);
void save_adam(const AdamState& state, const std::string& path);
AdamState load_adam(const std::string& path);

}  // namespace gpg
