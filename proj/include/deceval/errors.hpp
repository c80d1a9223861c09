#pragma once

#include <stdexcept>
#include <string>

namespace deceval {

// Error families map to CLI exit codes: ConfigError 2, DataError 3, NumericError 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingColumn : DataError {
  explicit MissingColumn(const std::string& col) : DataError("missing column: " + col) {}
};
struct NonBinaryValue : DataError {
  NonBinaryValue(std::size_t row, const std::string& col)
      : DataError("non-binary value at row " + std::to_string(row) + ", column " + col) {}
};
struct ScoreOutOfRange : DataError {
  ScoreOutOfRange(std::size_t row, const std::string& col)
      : DataError("score out of range at row " + std::to_string(row) + ", column " + col) {}
};
struct UnknownLevel : DataError {
  UnknownLevel(std::size_t row, const std::string& col)
      : DataError("undeclared covariate level at row " + std::to_string(row) + ", column " + col) {}
};
struct EmptyArm : DataError {
  explicit EmptyArm(int z) : DataError("arm z=" + std::to_string(z) + " has zero records") {}
};
struct EmptySubgroup : DataError {
  explicit EmptySubgroup(const std::string& name)
      : DataError("subgroup matches no records: " + name) {}
};
struct EmptyCell : DataError {
  using DataError::DataError;
};
struct MissingScoreContext : DataError {
  using DataError::DataError;
};
struct MissingScores : DataError {
  using DataError::DataError;
};
struct MissingAConditionalFit : DataError {
  using DataError::DataError;
};
struct UnknownCell : DataError {
  using DataError::DataError;
};
struct IncoherentInput : DataError {
  using DataError::DataError;
};
struct RuleRangeError : DataError {
  using DataError::DataError;
};

struct NonConvergence : NumericError {
  using NumericError::NumericError;
};
struct ContradictoryRejection : NumericError {
  using NumericError::NumericError;
};
struct InfeasibleObservables : NumericError {
  using NumericError::NumericError;
};

}  // namespace deceval
