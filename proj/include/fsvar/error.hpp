#pragma once

#include <stdexcept>
#include <string>

namespace fsvar {

/// Coarse classification used by the CLI to pick an exit code.
enum class ErrorCategory { config, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& what)
      : Error(ErrorCategory::config, "dimension mismatch: " + what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

struct ParseError : DataError {
  using DataError::DataError;
};

struct MissingValue : DataError {
  MissingValue(long row, long col)
      : DataError("missing value at row " + std::to_string(row) + ", column " +
                  std::to_string(col)),
        row(row),
        col(col) {}
  long row;
  long col;
};

struct NonPositiveScale : DataError {
  using DataError::DataError;
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

struct NotPositiveDefinite : NumericalError {
  explicit NotPositiveDefinite(const std::string& what)
      : NumericalError("matrix not positive definite: " + what) {}
};

struct NonStationary : NumericalError {
  using NumericalError::NumericalError;
};

struct MaxIterationsExceeded : NumericalError {
  using NumericalError::NumericalError;
};

struct DegenerateWeights : NumericalError {
  DegenerateWeights(const std::string& what, double ess)
      : NumericalError(what), ess(ess) {}
  double ess;
};

struct TruncationFailure : NumericalError {
  TruncationFailure(const std::string& what, double log_orthant_probability)
      : NumericalError(what), log_orthant_probability(log_orthant_probability) {}
  double log_orthant_probability;
};

struct NonInvertibleMean : NumericalError {
  using NumericalError::NumericalError;
};

struct MaxResimulations : NumericalError {
  using NumericalError::NumericalError;
};

struct InsufficientDraws : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace fsvar
