#pragma once

#include <stdexcept>
#include <string>

namespace tansens {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (vector length vs. layer width, mismatched specs).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function (poles, log of
/// values <= 1, zero layer maxima, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A series or iterative evaluation failed to reach its accuracy target.
class AccuracyError : public Error {
 public:
  AccuracyError(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

/// Non-finite values appeared during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable or truncated file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File content does not follow the expected binary/text layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (CLI flags, config files, preconditions).
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace tansens
