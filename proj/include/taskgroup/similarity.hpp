#ifndef TASKGROUP_SIMILARITY_HPP
#define TASKGROUP_SIMILARITY_HPP

#include <span>
#include <string>
#include <vector>

#include "taskgroup/error.hpp"

namespace taskgroup {

/// Short task identifier, unique within a run ("sw", "task3", ...).
using TaskLabel = std::string;

/// One captured gradient record: the epoch-mean gradient of one task for
/// one named layer, flattened to a dense vector.
struct GradientTrace {
  TaskLabel task;
  int epoch = 0;
  std::string layer;
  std::vector<double> vector;

  std::size_t dim() const { return vector.size(); }
};

enum class MatrixKind { GradientCosine, NegatedDistance, Raw };

const char* to_string(MatrixKind kind);
MatrixKind matrix_kind_from_string(const std::string& name);

/// Labeled symmetric N x N matrix of pairwise task scores. Construction
/// computes each i < j entry once and mirrors it, so symmetry is exact.
struct SimilarityMatrix {
  std::vector<TaskLabel> labels;
  std::vector<std::vector<double>> values;
  MatrixKind kind = MatrixKind::Raw;

  std::size_t size() const { return labels.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i][j]; }

  /// Index of a label; throws UnknownLabel.
  std::size_t index_of(const TaskLabel& label) const;
};

/// Cosine similarity u.v / (|u||v|), accumulated in extended precision and
/// clamped to [-1, 1]. Throws DimensionMismatch on unequal lengths and
/// DegenerateVector when either norm is <= 1e-12.
double cosine(std::span<const double> u, std::span<const double> v);

/// Pairwise similarity averaged over the common epoch set (the intersection
/// of the epochs present for every task at the given layer). The diagonal is
/// set to 1.0. Traces must honor the one-record-per-(task, epoch, layer)
/// rule and carry a consistent dimension per layer.
SimilarityMatrix epoch_similarity_average(const std::vector<GradientTrace>& traces,
                                          const std::string& layer,
                                          const std::vector<TaskLabel>& tasks);

/// Epochs present for every task at the layer (the common epoch set), plus
/// the per-task epochs that fall outside it. Used by callers that must
/// report dropped epochs before averaging.
struct EpochCoverage {
  std::vector<int> common;
  std::vector<std::pair<TaskLabel, int>> dropped;
};
EpochCoverage epoch_coverage(const std::vector<GradientTrace>& traces,
                             const std::string& layer,
                             const std::vector<TaskLabel>& tasks);

/// Converts a distance matrix to a similarity matrix by negation, so that
/// nearest means most similar. Input must be symmetric with a zero diagonal
/// and non-negative entries.
SimilarityMatrix similarity_from_distance(const std::vector<TaskLabel>& labels,
                                          const std::vector<std::vector<double>>& distances);

/// Validates labels (non-empty, no duplicates), shape, exact symmetry and,
/// for gradient-cosine matrices, the unit diagonal and [-1, 1] range.
void validate_matrix(const SimilarityMatrix& matrix);

}  // namespace taskgroup

#endif  // TASKGROUP_SIMILARITY_HPP
