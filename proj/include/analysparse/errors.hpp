#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace analysparse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An operation that needs a nonzero operator received an all-zero one.
class ZeroOperatorError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver left its convergence envelope or produced non-finite values.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Malformed dataset file.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Misuse of a recording tape (non-scalar loss, second backward pass, foreign Var).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// A recording outgrew its memory cap.
class UnrollBudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace analysparse
