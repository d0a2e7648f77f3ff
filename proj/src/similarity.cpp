#include "taskgroup/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace taskgroup {

namespace {

constexpr double kNormFloor = 1e-12;

std::string pair_name(const TaskLabel& task, int epoch) {
  return "task '" + task + "' epoch " + std::to_string(epoch);
}

}  // namespace

const char* to_string(MatrixKind kind) {
  switch (kind) {
    case MatrixKind::GradientCosine: return "gradient-cosine";
    case MatrixKind::NegatedDistance: return "negated-distance";
    case MatrixKind::Raw: return "raw";
  }
  return "raw";
}

MatrixKind matrix_kind_from_string(const std::string& name) {
  if (name == "gradient-cosine") return MatrixKind::GradientCosine;
  if (name == "negated-distance") return MatrixKind::NegatedDistance;
  if (name == "raw") return MatrixKind::Raw;
  throw Error(ErrorCode::InvalidConfig, "unknown matrix kind '" + name + "'");
}

std::size_t SimilarityMatrix::index_of(const TaskLabel& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw Error(ErrorCode::UnknownLabel, "label '" + label + "' not in matrix");
  }
  return static_cast<std::size_t>(it - labels.begin());
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.empty()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine needs equal non-empty lengths, got " +
                    std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  long double dot = 0.0L, uu = 0.0L, vv = 0.0L;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<long double>(u[i]) * v[i];
    uu += static_cast<long double>(u[i]) * u[i];
    vv += static_cast<long double>(v[i]) * v[i];
  }
  const double nu = std::sqrt(static_cast<double>(uu));
  const double nv = std::sqrt(static_cast<double>(vv));
  if (nu <= kNormFloor || nv <= kNormFloor) {
    throw Error(ErrorCode::DegenerateVector,
                "vector norm below 1e-12; drop or re-trace the task");
  }
  const double value = static_cast<double>(dot / std::sqrt(uu * vv));
  return std::clamp(value, -1.0, 1.0);
}

EpochCoverage epoch_coverage(const std::vector<GradientTrace>& traces,
                             const std::string& layer,
                             const std::vector<TaskLabel>& tasks) {
  std::map<TaskLabel, std::set<int>> epochs_by_task;
  bool layer_seen = false;
  for (const auto& trace : traces) {
    if (trace.layer != layer) continue;
    layer_seen = true;
    epochs_by_task[trace.task].insert(trace.epoch);
  }
  if (!layer_seen) {
    throw Error(ErrorCode::MissingTrace, "no traces for layer '" + layer + "'");
  }

  std::set<int> common;
  bool first = true;
  for (const auto& task : tasks) {
    auto it = epochs_by_task.find(task);
    if (it == epochs_by_task.end()) {
      throw Error(ErrorCode::MissingTrace,
                  "no traces for task '" + task + "' at layer '" + layer + "'");
    }
    if (first) {
      common = it->second;
      first = false;
    } else {
      std::set<int> next;
      std::set_intersection(common.begin(), common.end(), it->second.begin(),
                            it->second.end(), std::inserter(next, next.begin()));
      common = std::move(next);
    }
  }

  EpochCoverage coverage;
  coverage.common.assign(common.begin(), common.end());
  for (const auto& task : tasks) {
    for (int epoch : epochs_by_task.at(task)) {
      if (!common.count(epoch)) coverage.dropped.emplace_back(task, epoch);
    }
  }
  return coverage;
}

SimilarityMatrix epoch_similarity_average(const std::vector<GradientTrace>& traces,
                                          const std::string& layer,
                                          const std::vector<TaskLabel>& tasks) {
  if (tasks.empty()) {
    throw Error(ErrorCode::MissingTrace, "empty task list");
  }
  {
    std::set<TaskLabel> unique(tasks.begin(), tasks.end());
    if (unique.size() != tasks.size()) {
      throw Error(ErrorCode::DuplicateTrace, "duplicate task label in task list");
    }
    for (const auto& task : tasks) {
      if (task.empty()) throw Error(ErrorCode::UnknownLabel, "empty task label");
    }
  }

  // Index records and enforce the per-(task, epoch, layer) uniqueness and
  // per-layer dimension invariants.
  std::map<std::pair<TaskLabel, int>, const GradientTrace*> by_key;
  std::size_t dim = 0;
  for (const auto& trace : traces) {
    if (trace.layer != layer) continue;
    if (trace.vector.empty()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "empty gradient vector for " + pair_name(trace.task, trace.epoch));
    }
    if (dim == 0) {
      dim = trace.dim();
    } else if (trace.dim() != dim) {
      throw Error(ErrorCode::InconsistentDims,
                  "layer '" + layer + "' has vectors of length " +
                      std::to_string(dim) + " and " + std::to_string(trace.dim()));
    }
    auto key = std::make_pair(trace.task, trace.epoch);
    if (!by_key.emplace(key, &trace).second) {
      throw Error(ErrorCode::DuplicateTrace,
                  "duplicate record for " + pair_name(trace.task, trace.epoch) +
                      " layer '" + layer + "'");
    }
  }

  const EpochCoverage coverage = epoch_coverage(traces, layer, tasks);
  if (coverage.common.empty()) {
    std::ostringstream msg;
    msg << "no epoch is present for every task at layer '" << layer << "';";
    for (const auto& task : tasks) {
      msg << " " << task << " has epochs {";
      bool first = true;
      for (const auto& [t, epoch] : coverage.dropped) {
        if (t != task) continue;
        msg << (first ? "" : ", ") << epoch;
        first = false;
      }
      msg << "}";
    }
    throw Error(ErrorCode::MissingTrace, msg.str());
  }

  const std::size_t n = tasks.size();
  SimilarityMatrix matrix;
  matrix.labels = tasks;
  matrix.kind = MatrixKind::GradientCosine;
  matrix.values.assign(n, std::vector<double>(n, 0.0));

  for (std::size_t i = 0; i < n; ++i) matrix.values[i][i] = 1.0;

  const double n_epochs = static_cast<double>(coverage.common.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (int epoch : coverage.common) {
        const GradientTrace* a = by_key.at({tasks[i], epoch});
        const GradientTrace* b = by_key.at({tasks[j], epoch});
        try {
          sum += cosine(a->vector, b->vector);
        } catch (const Error& err) {
          if (err.code() != ErrorCode::DegenerateVector) throw;
          // Re-throw with the offending (task, epoch) attached.
          const bool a_bad = [&] {
            long double nn = 0.0L;
            for (double x : a->vector) nn += static_cast<long double>(x) * x;
            return std::sqrt(static_cast<double>(nn)) <= kNormFloor;
          }();
          const TaskLabel& bad = a_bad ? tasks[i] : tasks[j];
          throw Error(ErrorCode::DegenerateVector,
                      "vanished gradient for " + pair_name(bad, epoch) +
                          " at layer '" + layer + "'");
        }
      }
      const double mean = sum / n_epochs;
      matrix.values[i][j] = mean;
      matrix.values[j][i] = mean;
    }
  }
  return matrix;
}

SimilarityMatrix similarity_from_distance(const std::vector<TaskLabel>& labels,
                                          const std::vector<std::vector<double>>& distances) {
  const std::size_t n = labels.size();
  if (distances.size() != n) {
    throw Error(ErrorCode::DimensionMismatch,
                "distance matrix has " + std::to_string(distances.size()) +
                    " rows for " + std::to_string(n) + " labels");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (distances[i].size() != n) {
      throw Error(ErrorCode::DimensionMismatch,
                  "row " + std::to_string(i) + " has " +
                      std::to_string(distances[i].size()) + " entries");
    }
    if (distances[i][i] != 0.0) {
      throw Error(ErrorCode::NonzeroDiagonal,
                  "self-distance of '" + labels[i] + "' is not zero");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (distances[i][j] < 0.0) {
        throw Error(ErrorCode::NegativeDistance,
                    "negative distance between '" + labels[i] + "' and '" +
                        labels[j] + "'");
      }
      if (distances[i][j] != distances[j][i]) {
        throw Error(ErrorCode::AsymmetricInput,
                    "distance between '" + labels[i] + "' and '" + labels[j] +
                        "' is not symmetric");
      }
    }
  }

  SimilarityMatrix matrix;
  matrix.labels = labels;
  matrix.kind = MatrixKind::NegatedDistance;
  matrix.values.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double value = -distances[i][j];
      matrix.values[i][j] = value;
      matrix.values[j][i] = value;
    }
  }
  return matrix;
}

void validate_matrix(const SimilarityMatrix& matrix) {
  const std::size_t n = matrix.labels.size();
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "matrix has no labels");
  {
    std::set<TaskLabel> unique(matrix.labels.begin(), matrix.labels.end());
    if (unique.size() != n) {
      throw Error(ErrorCode::DuplicateTrace, "duplicate label in matrix");
    }
  }
  for (const auto& label : matrix.labels) {
    if (label.empty()) throw Error(ErrorCode::UnknownLabel, "empty label");
  }
  if (matrix.values.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "matrix row count != label count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (matrix.values[i].size() != n) {
      throw Error(ErrorCode::DimensionMismatch,
                  "matrix row " + std::to_string(i) + " has wrong length");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(matrix.values[i][j])) {
        throw Error(ErrorCode::InvalidConfig, "non-finite matrix entry");
      }
      if (matrix.values[i][j] != matrix.values[j][i]) {
        throw Error(ErrorCode::AsymmetricInput,
                    "matrix is not exactly symmetric at (" + std::to_string(i) +
                        ", " + std::to_string(j) + ")");
      }
    }
  }
  if (matrix.kind == MatrixKind::GradientCosine) {
    for (std::size_t i = 0; i < n; ++i) {
      if (matrix.values[i][i] != 1.0) {
        throw Error(ErrorCode::InvalidConfig,
                    "gradient-cosine diagonal entry is not 1.0");
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (matrix.values[i][j] < -1.0 || matrix.values[i][j] > 1.0) {
          throw Error(ErrorCode::InvalidConfig,
                      "gradient-cosine entry outside [-1, 1]");
        }
      }
    }
  }
}

}  // namespace taskgroup
