#ifndef TASKGROUP_GROUPING_HPP
#define TASKGROUP_GROUPING_HPP

#include <cstdint>
#include <map>
#include <vector>

#include "taskgroup/similarity.hpp"

namespace taskgroup {

/// K non-empty, pairwise-distinct task groups whose union covers every task.
/// A task may belong to several groups. Groups are kept in canonical form:
/// members sorted by label, group list sorted lexicographically.
struct Grouping {
  std::vector<std::vector<TaskLabel>> groups;
  std::vector<TaskLabel> labels;
};

struct GroupingResult {
  Grouping grouping;
  double overall = 0.0;
  std::map<TaskLabel, double> per_task_collective;
  std::map<TaskLabel, std::size_t> assignment;
};

enum class SearchMode { Exhaustive, BranchAndBound };

struct SearchConfig {
  std::size_t k = 1;
  std::size_t max_group_size = 0;  // 0 means unlimited (N)
  SearchMode mode = SearchMode::BranchAndBound;
  unsigned workers = 1;  // sibling branches searched in parallel when > 1
};

/// Mean pairwise similarity between a task and the other members of its
/// group; 0.0 for a singleton (the empty average's neutral point).
double collective_score(const TaskLabel& task, const std::vector<TaskLabel>& group,
                        const SimilarityMatrix& matrix);

/// Best collective score among the groups containing the task.
double task_score_in_grouping(const TaskLabel& task, const Grouping& grouping,
                              const SimilarityMatrix& matrix);

/// Sum of task_score_in_grouping over all tasks.
double overall_score(const Grouping& grouping, const SimilarityMatrix& matrix);

/// Reference search: enumerates every covering set of K distinct non-empty
/// groups and keeps the maximizer with the smallest canonical form. Guarded
/// at N <= 10.
GroupingResult exhaustive_best_grouping(const SimilarityMatrix& matrix,
                                        const SearchConfig& config);

/// Production search. Candidate groups are enumerated in canonical order;
/// depth-first selection with strictly increasing candidate index is pruned
/// against an optimistic per-task bound, so the result (grouping and score)
/// is exactly the exhaustive one, at any worker count.
GroupingResult branch_and_bound_grouping(const SimilarityMatrix& matrix,
                                         const SearchConfig& config);

GroupingResult best_grouping(const SimilarityMatrix& matrix, const SearchConfig& config);

/// Index of the containing group with the highest collective score per task,
/// ties broken by the lowest group index.
std::map<TaskLabel, std::size_t> assign_inference_groups(const Grouping& grouping,
                                                         const SimilarityMatrix& matrix);

/// Fills overall, per_task_collective and assignment for a given grouping.
GroupingResult score_grouping(const Grouping& grouping, const SimilarityMatrix& matrix);

}  // namespace taskgroup

#endif  // TASKGROUP_GROUPING_HPP
