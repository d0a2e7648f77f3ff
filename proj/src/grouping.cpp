#include "taskgroup/grouping.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <thread>

namespace taskgroup {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Mask = std::uint64_t;

/// Mean similarity between task t and the other members of the mask,
/// summed in ascending index order. Singleton masks score 0.0.
double collective_in_mask(const SimilarityMatrix& matrix, std::size_t t, Mask mask) {
  double sum = 0.0;
  int count = 0;
  for (Mask rest = mask; rest != 0;) {
    const int m = std::countr_zero(rest);
    rest &= rest - 1;
    if (static_cast<std::size_t>(m) == t) continue;
    sum += matrix.values[t][static_cast<std::size_t>(m)];
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

std::vector<std::size_t> sorted_member_indices(const std::vector<TaskLabel>& group,
                                               const SimilarityMatrix& matrix) {
  std::vector<std::size_t> indices;
  indices.reserve(group.size());
  for (const auto& member : group) indices.push_back(matrix.index_of(member));
  std::sort(indices.begin(), indices.end());
  const auto dup = std::adjacent_find(indices.begin(), indices.end());
  if (dup != indices.end()) {
    throw Error(ErrorCode::InvalidConfig,
                "group contains '" + matrix.labels[*dup] + "' twice");
  }
  return indices;
}

/// Canonical form: members sorted by label, then the group list sorted.
std::vector<std::vector<TaskLabel>> canonical_groups(
    const std::vector<Mask>& masks, const std::vector<TaskLabel>& labels) {
  std::vector<std::vector<TaskLabel>> groups;
  groups.reserve(masks.size());
  for (Mask mask : masks) {
    std::vector<TaskLabel> members;
    for (Mask rest = mask; rest != 0;) {
      const int m = std::countr_zero(rest);
      rest &= rest - 1;
      members.push_back(labels[static_cast<std::size_t>(m)]);
    }
    std::sort(members.begin(), members.end());
    groups.push_back(std::move(members));
  }
  std::sort(groups.begin(), groups.end());
  return groups;
}

struct SearchPlan {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t max_group_size = 0;
  Mask full = 0;
};

SearchPlan validate_search(const SimilarityMatrix& matrix, const SearchConfig& config) {
  validate_matrix(matrix);
  SearchPlan plan;
  plan.n = matrix.size();
  if (plan.n > 63) {
    throw Error(ErrorCode::TooManyTasks, "search supports at most 63 tasks");
  }
  if (config.k == 0) {
    throw Error(ErrorCode::InvalidConfig, "k must be positive");
  }
  if (config.k > plan.n) {
    throw Error(ErrorCode::Infeasible,
                "k = " + std::to_string(config.k) + " exceeds the " +
                    std::to_string(plan.n) + " available tasks");
  }
  plan.k = config.k;
  plan.max_group_size =
      config.max_group_size == 0 ? plan.n : std::min(config.max_group_size, plan.n);
  if (plan.k * plan.max_group_size < plan.n) {
    throw Error(ErrorCode::Infeasible,
                "no covering exists: k * max_group_size < number of tasks");
  }
  plan.full = (plan.n == 64) ? ~Mask{0} : ((Mask{1} << plan.n) - 1);
  return plan;
}

std::size_t candidate_count(std::size_t n, std::size_t max_group_size) {
  std::size_t total = 0;
  double binom = 1.0;
  for (std::size_t m = 1; m <= max_group_size; ++m) {
    binom = binom * static_cast<double>(n - m + 1) / static_cast<double>(m);
    if (binom > 1e18) return std::numeric_limits<std::size_t>::max();
    total += static_cast<std::size_t>(binom);
  }
  return total;
}

/// Gosper's hack: next mask with the same popcount.
Mask next_combination(Mask mask) {
  const Mask u = mask & (~mask + 1);
  const Mask v = mask + u;
  return v | (((mask ^ v) / u) >> 2);
}

/// All masks with 1..max_group_size members, sorted by canonical key
/// (the ascending sequence of label ranks), so that selections with
/// strictly increasing candidate index enumerate groupings in canonical
/// tie-break order.
std::vector<Mask> canonical_candidates(const SimilarityMatrix& matrix,
                                       const SearchPlan& plan) {
  const std::size_t count = candidate_count(plan.n, plan.max_group_size);
  // scores + suffix_best are count x n doubles each
  const double table_bytes = 2.0 * static_cast<double>(count) * plan.n * sizeof(double);
  if (table_bytes > 2e9) {
    throw Error(ErrorCode::TooManyTasks,
                "candidate set of " + std::to_string(count) +
                    " groups is too large; lower max_group_size");
  }

  std::vector<std::size_t> rank(plan.n);
  {
    std::vector<std::size_t> order(plan.n);
    for (std::size_t i = 0; i < plan.n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return matrix.labels[a] < matrix.labels[b];
    });
    for (std::size_t r = 0; r < plan.n; ++r) rank[order[r]] = r;
  }

  struct Candidate {
    Mask mask;
    std::vector<std::uint8_t> key;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(count);
  for (std::size_t size = 1; size <= plan.max_group_size; ++size) {
    for (Mask mask = (Mask{1} << size) - 1; mask <= plan.full;
         mask = next_combination(mask)) {
      Candidate cand;
      cand.mask = mask;
      cand.key.reserve(size);
      for (Mask rest = mask; rest != 0;) {
        const int m = std::countr_zero(rest);
        rest &= rest - 1;
        cand.key.push_back(static_cast<std::uint8_t>(rank[static_cast<std::size_t>(m)]));
      }
      std::sort(cand.key.begin(), cand.key.end());
      candidates.push_back(std::move(cand));
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.key < b.key; });

  std::vector<Mask> masks;
  masks.reserve(candidates.size());
  for (auto& cand : candidates) masks.push_back(cand.mask);
  return masks;
}

struct BnbTables {
  // scores[i][t]: collective score of task t inside candidate i (t must be
  // a member); suffix_best[i][t]: best score of t over candidates >= i,
  // -inf when no remaining candidate contains t.
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<double>> suffix_best;
};

BnbTables build_tables(const SimilarityMatrix& matrix, const std::vector<Mask>& cands,
                       std::size_t n) {
  BnbTables tables;
  const std::size_t m = cands.size();
  tables.scores.assign(m, {});
  for (std::size_t i = 0; i < m; ++i) {
    tables.scores[i].assign(n, kNegInf);
    for (Mask rest = cands[i]; rest != 0;) {
      const int t = std::countr_zero(rest);
      rest &= rest - 1;
      tables.scores[i][static_cast<std::size_t>(t)] =
          collective_in_mask(matrix, static_cast<std::size_t>(t), cands[i]);
    }
  }
  tables.suffix_best.assign(m + 1, std::vector<double>(n, kNegInf));
  for (std::size_t i = m; i-- > 0;) {
    for (std::size_t t = 0; t < n; ++t) {
      tables.suffix_best[i][t] = std::max(tables.suffix_best[i + 1][t], tables.scores[i][t]);
    }
  }
  return tables;
}

struct WorkerBest {
  double score = kNegInf;
  std::vector<std::size_t> selection;  // ascending candidate indices
};

class BnbWorker {
 public:
  BnbWorker(const std::vector<Mask>& cands, const BnbTables& tables, std::size_t n,
            std::size_t k, Mask full, std::atomic<double>& shared_best)
      : cands_(cands), tables_(tables), n_(n), k_(k), full_(full),
        shared_best_(shared_best) {}

  /// Searches the subtrees rooted at the given first-candidate indices,
  /// in ascending order.
  WorkerBest run(const std::vector<std::size_t>& roots) {
    chosen_.clear();
    std::vector<double> best_for_task(n_, kNegInf);
    for (std::size_t root : roots) {
      descend(root, k_, Mask{0}, best_for_task);
    }
    return best_;
  }

 private:
  void descend(std::size_t index, std::size_t slots_left, Mask covered,
               const std::vector<double>& best_for_task) {
    // Try candidate `index` as the next group, then recurse over the suffix.
    std::vector<double> child_best = best_for_task;
    for (Mask rest = cands_[index]; rest != 0;) {
      const int t = std::countr_zero(rest);
      rest &= rest - 1;
      child_best[static_cast<std::size_t>(t)] =
          std::max(child_best[static_cast<std::size_t>(t)],
                   tables_.scores[index][static_cast<std::size_t>(t)]);
    }
    const Mask child_covered = covered | cands_[index];
    const std::size_t slots_after = slots_left - 1;

    if (slots_after == 0) {
      if (child_covered != full_) return;
      double score = 0.0;
      for (std::size_t t = 0; t < n_; ++t) score += child_best[t];
      chosen_.push_back(index);
      if (score > best_.score) {
        best_.score = score;
        best_.selection = chosen_;
        double observed = shared_best_.load();
        while (observed < score && !shared_best_.compare_exchange_weak(observed, score)) {
        }
      }
      chosen_.pop_back();
      return;
    }

    // Optimistic bound: each task keeps the better of its score among the
    // chosen groups and the best it could reach in any remaining candidate.
    // Term-wise it dominates every completion in the subtree, so pruning on
    // it is exact. Equal-score completions are only pruned against this
    // worker's own incumbent, which canonically precedes them; against the
    // shared incumbent the comparison stays strict so another worker cannot
    // suppress a canonically smaller tie.
    double bound = 0.0;
    const auto& future = tables_.suffix_best[index + 1];
    for (std::size_t t = 0; t < n_; ++t) {
      const double best_t = std::max(child_best[t], future[t]);
      if (best_t == kNegInf) return;  // task unreachable: no covering below
      bound += best_t;
    }
    if (bound < shared_best_.load() || bound <= best_.score) return;

    chosen_.push_back(index);
    const std::size_t m = cands_.size();
    for (std::size_t next = index + 1; next + slots_after <= m; ++next) {
      descend(next, slots_after, child_covered, child_best);
    }
    chosen_.pop_back();
  }

  const std::vector<Mask>& cands_;
  const BnbTables& tables_;
  std::size_t n_;
  std::size_t k_;
  Mask full_;
  std::atomic<double>& shared_best_;
  std::vector<std::size_t> chosen_;
  WorkerBest best_;
};

GroupingResult finish(const SimilarityMatrix& matrix, const std::vector<Mask>& masks) {
  Grouping grouping;
  grouping.labels = matrix.labels;
  grouping.groups = canonical_groups(masks, matrix.labels);
  return score_grouping(grouping, matrix);
}

}  // namespace

double collective_score(const TaskLabel& task, const std::vector<TaskLabel>& group,
                        const SimilarityMatrix& matrix) {
  const std::size_t t = matrix.index_of(task);
  const auto indices = sorted_member_indices(group, matrix);
  if (!std::binary_search(indices.begin(), indices.end(), t)) {
    throw Error(ErrorCode::TaskNotInGroup, "task '" + task + "' not in group");
  }
  double sum = 0.0;
  for (std::size_t m : indices) {
    if (m != t) sum += matrix.values[t][m];
  }
  const std::size_t others = indices.size() - 1;
  return others == 0 ? 0.0 : sum / static_cast<double>(others);
}

double task_score_in_grouping(const TaskLabel& task, const Grouping& grouping,
                              const SimilarityMatrix& matrix) {
  double best = kNegInf;
  for (const auto& group : grouping.groups) {
    if (std::find(group.begin(), group.end(), task) == group.end()) continue;
    best = std::max(best, collective_score(task, group, matrix));
  }
  if (best == kNegInf) {
    throw Error(ErrorCode::UncoveredTask, "task '" + task + "' is in no group");
  }
  return best;
}

double overall_score(const Grouping& grouping, const SimilarityMatrix& matrix) {
  double sum = 0.0;
  for (const auto& task : matrix.labels) {
    sum += task_score_in_grouping(task, grouping, matrix);
  }
  return sum;
}

std::map<TaskLabel, std::size_t> assign_inference_groups(const Grouping& grouping,
                                                         const SimilarityMatrix& matrix) {
  std::map<TaskLabel, std::size_t> assignment;
  for (const auto& task : matrix.labels) {
    double best = kNegInf;
    std::size_t best_index = 0;
    bool found = false;
    for (std::size_t g = 0; g < grouping.groups.size(); ++g) {
      const auto& group = grouping.groups[g];
      if (std::find(group.begin(), group.end(), task) == group.end()) continue;
      const double score = collective_score(task, group, matrix);
      if (!found || score > best) {
        best = score;
        best_index = g;
        found = true;
      }
    }
    if (!found) {
      throw Error(ErrorCode::UncoveredTask, "task '" + task + "' is in no group");
    }
    assignment[task] = best_index;
  }
  return assignment;
}

GroupingResult score_grouping(const Grouping& grouping, const SimilarityMatrix& matrix) {
  if (grouping.groups.empty()) {
    throw Error(ErrorCode::InvalidConfig, "grouping has no groups");
  }
  std::set<std::vector<TaskLabel>> seen;
  for (const auto& group : grouping.groups) {
    if (group.empty()) {
      throw Error(ErrorCode::InvalidConfig, "grouping contains an empty group");
    }
    auto sorted = group;
    std::sort(sorted.begin(), sorted.end());
    if (!seen.insert(sorted).second) {
      throw Error(ErrorCode::InvalidConfig, "grouping contains duplicate groups");
    }
  }

  GroupingResult result;
  result.grouping = grouping;
  result.grouping.labels = matrix.labels;
  result.overall = 0.0;
  for (const auto& task : matrix.labels) {
    const double score = task_score_in_grouping(task, result.grouping, matrix);
    result.per_task_collective[task] = score;
    result.overall += score;
  }
  result.assignment = assign_inference_groups(result.grouping, matrix);
  return result;
}

GroupingResult exhaustive_best_grouping(const SimilarityMatrix& matrix,
                                        const SearchConfig& config) {
  const SearchPlan plan = validate_search(matrix, config);
  if (plan.n > 10) {
    throw Error(ErrorCode::TooManyTasks,
                "exhaustive search is guarded at 10 tasks, got " +
                    std::to_string(plan.n));
  }

  // Plain mask-order candidate list; the tie-break below compares canonical
  // forms explicitly, so the enumeration order carries no meaning.
  std::vector<Mask> cands;
  for (Mask mask = 1; mask <= plan.full; ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) <= plan.max_group_size) {
      cands.push_back(mask);
    }
  }

  double best_score = kNegInf;
  std::vector<std::vector<TaskLabel>> best_canonical;
  std::vector<Mask> best_masks;
  std::vector<Mask> chosen;

  auto evaluate = [&]() {
    Mask covered = 0;
    for (Mask mask : chosen) covered |= mask;
    if (covered != plan.full) return;
    double score = 0.0;
    for (std::size_t t = 0; t < plan.n; ++t) {
      double task_best = kNegInf;
      for (Mask mask : chosen) {
        if (mask & (Mask{1} << t)) {
          task_best = std::max(task_best, collective_in_mask(matrix, t, mask));
        }
      }
      score += task_best;
    }
    if (score < best_score) return;
    auto canonical = canonical_groups(chosen, matrix.labels);
    if (score > best_score || canonical < best_canonical) {
      best_score = score;
      best_canonical = std::move(canonical);
      best_masks = chosen;
    }
  };

  auto recurse = [&](auto&& self, std::size_t start, std::size_t slots) -> void {
    if (slots == 0) {
      evaluate();
      return;
    }
    for (std::size_t i = start; i + slots <= cands.size(); ++i) {
      chosen.push_back(cands[i]);
      self(self, i + 1, slots - 1);
      chosen.pop_back();
    }
  };
  recurse(recurse, 0, plan.k);

  if (best_masks.empty()) {
    throw Error(ErrorCode::Infeasible, "no covering grouping exists");
  }
  return finish(matrix, best_masks);
}

GroupingResult branch_and_bound_grouping(const SimilarityMatrix& matrix,
                                         const SearchConfig& config) {
  const SearchPlan plan = validate_search(matrix, config);
  const std::vector<Mask> cands = canonical_candidates(matrix, plan);
  const BnbTables tables = build_tables(matrix, cands, plan.n);

  std::atomic<double> shared_best{kNegInf};
  const std::size_t m = cands.size();
  const std::size_t top_limit = m - (plan.k - 1);

  const unsigned workers =
      std::max(1u, std::min(config.workers, static_cast<unsigned>(top_limit)));

  std::vector<WorkerBest> results(workers);
  if (workers == 1) {
    BnbWorker worker(cands, tables, plan.n, plan.k, plan.full, shared_best);
    std::vector<std::size_t> roots(top_limit);
    for (std::size_t i = 0; i < top_limit; ++i) roots[i] = i;
    results[0] = worker.run(roots);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      threads.emplace_back([&, w]() {
        std::vector<std::size_t> roots;
        for (std::size_t i = w; i < top_limit; i += workers) roots.push_back(i);
        BnbWorker worker(cands, tables, plan.n, plan.k, plan.full, shared_best);
        results[w] = worker.run(roots);
      });
    }
    for (auto& thread : threads) thread.join();
  }

  // Merge: highest score wins; equal scores resolve to the canonically
  // smallest selection (ascending index sequences compare like canonical
  // group lists because the candidate order is canonical).
  const WorkerBest* winner = nullptr;
  for (const auto& result : results) {
    if (result.selection.empty()) continue;
    if (winner == nullptr || result.score > winner->score ||
        (result.score == winner->score && result.selection < winner->selection)) {
      winner = &result;
    }
  }
  if (winner == nullptr) {
    throw Error(ErrorCode::Infeasible, "no covering grouping exists");
  }

  std::vector<Mask> masks;
  masks.reserve(winner->selection.size());
  for (std::size_t index : winner->selection) masks.push_back(cands[index]);
  return finish(matrix, masks);
}

GroupingResult best_grouping(const SimilarityMatrix& matrix, const SearchConfig& config) {
  return config.mode == SearchMode::Exhaustive ? exhaustive_best_grouping(matrix, config)
                                               : branch_and_bound_grouping(matrix, config);
}

}  // namespace taskgroup
