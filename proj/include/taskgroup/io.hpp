#ifndef TASKGROUP_IO_HPP
#define TASKGROUP_IO_HPP

#include <set>
#include <string>
#include <vector>

#include "taskgroup/analysis.hpp"
#include "taskgroup/grouping.hpp"
#include "taskgroup/similarity.hpp"
#include "taskgroup/trainer.hpp"

namespace taskgroup {

/// Trainer run description read from a single JSON config file.
struct TrainerRun {
  TrainConfig train;
  std::vector<SyntheticTaskSpec> tasks;
  double subsample_fraction = 1.0;
};

TrainerRun read_trainer_config(const std::string& path);

// Gradient traces: JSON Lines, one {"task", "epoch", "layer", "vector"}
// record per line, floats at full round-trip precision.
void write_traces(const std::string& path, const std::vector<GradientTrace>& traces);
std::vector<GradientTrace> read_traces(const std::string& path);

/// Task order of a trace set: first appearance in the file.
std::vector<TaskLabel> trace_task_order(const std::vector<GradientTrace>& traces);

// Similarity matrix: {"labels": [...], "kind": str, "values": [[...]]}.
void write_matrix(const std::string& path, const SimilarityMatrix& matrix);
SimilarityMatrix read_matrix(const std::string& path);

/// Distance matrix file: same shape as a similarity matrix; kind ignored.
/// Returns labels and raw values for similarity_from_distance.
std::pair<std::vector<TaskLabel>, std::vector<std::vector<double>>> read_distances(
    const std::string& path);

// Grouping result:
// {"k", "groups", "overall_score", "per_task_collective", "assignment"}.
void write_grouping(const std::string& path, const GroupingResult& result);
GroupingResult read_grouping(const std::string& path);

/// Corpus directory: one UTF-8 text file per task, task label = file stem.
std::vector<CorpusDoc> read_corpus_dir(const std::string& dir);

/// Stopword list: one token per line, lowercased.
std::set<std::string> read_stopwords(const std::string& path);

void write_keywords(const std::string& path,
                    const std::map<TaskLabel, std::vector<std::string>>& keywords);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace taskgroup

#endif  // TASKGROUP_IO_HPP
