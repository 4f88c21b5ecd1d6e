#pragma once

#include <stdexcept>
#include <string>

namespace gpg {

// Precondition violated by the caller (bad index, bad segmentation, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent configuration; surfaced before any compute.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite intermediate values or a failed internal consistency check.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Enumeration or allocation request beyond a configured cap.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed snapshot file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gpg
