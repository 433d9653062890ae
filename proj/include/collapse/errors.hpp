#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace collapse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// cos(theta) is too close to zero for the sign alpha to be defined.
class SingularPhase : public Error {
 public:
  SingularPhase() : Error("singular phase: |cos(theta)| is within tolerance of zero") {}
  explicit SingularPhase(std::size_t index)
      : Error("singular phase at index " + std::to_string(index) +
              ": |cos(theta)| is within tolerance of zero"),
        index_(index) {}

  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  std::optional<std::size_t> index_;
};

/// Initial probability sits on a fixed point (or past a threshold).
class DegenerateInitial : public Error {
 public:
  using Error::Error;
};

class WrongDimension : public Error {
 public:
  using Error::Error;
};

/// A step pushed a probability out of [0, 1] by more than roundoff.
class StepOverflow : public Error {
 public:
  using Error::Error;
};

class DimensionTooLarge : public Error {
 public:
  using Error::Error;
};

class LowExpectedCount : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace collapse
