#pragma once

#include <stdexcept>

namespace rppg {

// Error taxonomy shared by the whole library. The CLI maps these onto
// process exit codes (see cli.cpp).

// A caller broke a documented precondition: shape or length mismatch,
// out-of-bounds box, non-scalar loss node.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A configuration value is invalid: bad compression ratio, non-divisible
// extents, frequency band outside Nyquist.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents: bad magic, unsupported version, checksum failure.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failure or truncated payload.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rppg
