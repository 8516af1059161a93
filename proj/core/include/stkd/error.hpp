#pragma once

#include <stdexcept>
#include <string>

namespace stkd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied hyperparameter or argument is out of range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (negative weights, zero variance, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file does not follow its declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API misuse (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. The model passed to the trainer has
/// been restored to its best parameters before this is thrown.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, int epoch)
      : NumericError(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace stkd
