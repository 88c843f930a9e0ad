#pragma once

#include <stdexcept>
#include <string>

namespace corrnet {

// Error categories. The CLI maps them onto process exit codes.

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values during training or a failed gradient check.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant (e.g. a cycle in the autograd tape).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace corrnet
