#ifndef TASKGROUP_ERROR_HPP
#define TASKGROUP_ERROR_HPP

#include <stdexcept>
#include <string>

namespace taskgroup {

enum class ErrorCode {
  DimensionMismatch,
  DegenerateVector,
  MissingTrace,
  DuplicateTrace,
  AsymmetricInput,
  NegativeDistance,
  NonzeroDiagonal,
  InconsistentDims,
  EmptyDataset,
  TaskNotInGroup,
  UnknownLabel,
  UncoveredTask,
  TooManyTasks,
  Infeasible,
  ZeroVariance,
  LengthMismatch,
  LabelMismatch,
  EmptyCorpus,
  InvalidConfig,
  IoError,
};

const char* to_string(ErrorCode code);

/// Error type thrown by all taskgroup operations. The code identifies the
/// failure class; the message carries the offending task/epoch/key names.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace taskgroup

#endif  // TASKGROUP_ERROR_HPP
