#pragma once

#include <stdexcept>
#include <string>

namespace mof {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Mismatched tensor shapes, ranks or extents.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// Invalid operand values (log of nonpositive, division by zero, zero-norm rows, ...).
class ValueError : public Error {
 public:
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

/// NaN/Inf detected where the training loop must abort.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/// File IO and format problems.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Bad run configuration or flag combinations.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace mof
