#pragma once

#include <stdexcept>
#include <string>

namespace erfseg {

/// Tensor extents or a ConvSpec disagree with the data they are applied to.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A user-facing configuration (network, dataset, training) is invalid.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value (e.g. training divergence).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace erfseg
