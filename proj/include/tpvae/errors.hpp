#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tpvae {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite value in a loss, gradient or constructor input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OracleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Dataset decoding failure. `position` is a byte offset for binary input and
// a 1-based line number for text input.
class ParseError : public std::runtime_error {
 public:
  enum class Unit { byte_offset, line };

  ParseError(const std::string& what, Unit unit, std::size_t position)
      : std::runtime_error(what + (unit == Unit::byte_offset ? " (at byte offset " : " (at line ") +
                           std::to_string(position) + ")"),
        unit_(unit),
        position_(position) {}

  Unit unit() const noexcept { return unit_; }
  std::size_t position() const noexcept { return position_; }

 private:
  Unit unit_;
  std::size_t position_;
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tpvae
