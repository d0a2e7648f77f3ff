#include "taskgroup/error.hpp"

namespace taskgroup {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::MissingTrace: return "MissingTrace";
    case ErrorCode::DuplicateTrace: return "DuplicateTrace";
    case ErrorCode::AsymmetricInput: return "AsymmetricInput";
    case ErrorCode::NegativeDistance: return "NegativeDistance";
    case ErrorCode::NonzeroDiagonal: return "NonzeroDiagonal";
    case ErrorCode::InconsistentDims: return "InconsistentDims";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::TaskNotInGroup: return "TaskNotInGroup";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::UncoveredTask: return "UncoveredTask";
    case ErrorCode::TooManyTasks: return "TooManyTasks";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace taskgroup
