// taskgroup: batch driver for the task-grouping pipeline.
//
// Pipeline: `trace` trains the bundled multi-task model on synthetic tasks
// and records per-epoch gradient traces; `similarity` turns traces (or a
// distance matrix) into a labeled similarity matrix; `group` searches for
// the best K covering groups and assigns each task its inference group.
// `sweep-k`, `correlate` and `keywords` are the analysis companions.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "taskgroup/analysis.hpp"
#include "taskgroup/grouping.hpp"
#include "taskgroup/io.hpp"
#include "taskgroup/rng.hpp"
#include "taskgroup/similarity.hpp"
#include "taskgroup/trainer.hpp"

namespace {

using namespace taskgroup;

// Exit codes: 0 success, 1 unexpected, 2 config, 3 trace/similarity input,
// 4 grouping infeasibility, 5 label mismatch, 6 corpus errors.
int exit_code_for(const Error& err, int io_default) {
  switch (err.code()) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::EmptyDataset:
      return 2;
    case ErrorCode::DimensionMismatch:
    case ErrorCode::DegenerateVector:
    case ErrorCode::MissingTrace:
    case ErrorCode::DuplicateTrace:
    case ErrorCode::AsymmetricInput:
    case ErrorCode::NegativeDistance:
    case ErrorCode::NonzeroDiagonal:
    case ErrorCode::InconsistentDims:
    case ErrorCode::ZeroVariance:
    case ErrorCode::LengthMismatch:
      return 3;
    case ErrorCode::TaskNotInGroup:
    case ErrorCode::UnknownLabel:
    case ErrorCode::UncoveredTask:
    case ErrorCode::TooManyTasks:
    case ErrorCode::Infeasible:
      return 4;
    case ErrorCode::LabelMismatch:
      return 5;
    case ErrorCode::EmptyCorpus:
      return 6;
    case ErrorCode::IoError:
      return io_default;
  }
  return 1;
}

/// Shortest round-trip decimal form, shared with the JSON writers so CSV
/// and JSON floats match byte for byte.
std::string format_double(double value) {
  return nlohmann::json(value).dump();
}

std::string file_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

struct TraceArgs {
  std::string config_path;
  std::string out_path;
};

int run_trace(const TraceArgs& args) {
  const TrainerRun run = read_trainer_config(args.config_path);
  std::vector<Dataset> datasets = generate_synthetic_tasks(run.tasks);
  if (run.subsample_fraction < 1.0) {
    for (std::size_t t = 0; t < datasets.size(); ++t) {
      datasets[t] =
          subsample_uniform(datasets[t], run.subsample_fraction,
                            mix_seed(run.tasks[t].seed, 0xF1ACULL));
    }
  }
  const TrainResult result = train_and_capture(datasets, run.train);
  for (std::size_t epoch = 0; epoch < result.epoch_task_loss.size(); ++epoch) {
    double mean = 0.0;
    for (double loss : result.epoch_task_loss[epoch]) mean += loss;
    mean /= static_cast<double>(result.epoch_task_loss[epoch].size());
    std::cout << "epoch " << epoch << ": mean_loss=" << format_double(mean) << '\n';
  }
  write_traces(args.out_path, result.traces);
  std::cout << "wrote " << result.traces.size() << " trace records to "
            << args.out_path << '\n';
  return 0;
}

struct SimilarityArgs {
  std::string traces_path;
  std::string distances_path;
  std::string layer = kClassifierLayer;
  std::string out_path;
};

int run_similarity(const SimilarityArgs& args) {
  SimilarityMatrix matrix;
  if (!args.distances_path.empty()) {
    auto [labels, values] = read_distances(args.distances_path);
    matrix = similarity_from_distance(labels, values);
  } else {
    const auto traces = read_traces(args.traces_path);
    const auto tasks = trace_task_order(traces);
    const EpochCoverage coverage = epoch_coverage(traces, args.layer, tasks);
    for (const auto& [task, epoch] : coverage.dropped) {
      std::cerr << "warning: dropping epoch " << epoch << " of task '" << task
                << "' (not present for all tasks)\n";
    }
    matrix = epoch_similarity_average(traces, args.layer, tasks);
  }
  write_matrix(args.out_path, matrix);
  std::cout << "wrote " << matrix.size() << "x" << matrix.size()
            << " similarity matrix to " << args.out_path << '\n';
  return 0;
}

struct GroupArgs {
  std::string matrix_path;
  std::size_t k = 1;
  std::string mode = "branch-and-bound";
  std::size_t max_group_size = 0;
  unsigned workers = 1;
  std::string out_path;
};

SearchConfig to_search_config(const GroupArgs& args) {
  SearchConfig config;
  config.k = args.k;
  config.max_group_size = args.max_group_size;
  config.mode = (args.mode == "exhaustive") ? SearchMode::Exhaustive
                                            : SearchMode::BranchAndBound;
  config.workers = args.workers;
  return config;
}

int run_group(const GroupArgs& args) {
  const SimilarityMatrix matrix = read_matrix(args.matrix_path);
  const GroupingResult result = best_grouping(matrix, to_search_config(args));
  write_grouping(args.out_path, result);
  std::cout << "overall_score=" << format_double(result.overall) << '\n';
  for (std::size_t g = 0; g < result.grouping.groups.size(); ++g) {
    std::cout << "group " << g << ":";
    for (const auto& member : result.grouping.groups[g]) std::cout << ' ' << member;
    std::cout << '\n';
  }
  return 0;
}

struct SweepArgs {
  std::string matrix_path;
  std::size_t k_min = 1;
  std::size_t k_max = 0;  // 0: up to N
  std::string mode = "branch-and-bound";
  std::size_t max_group_size = 0;
  unsigned workers = 1;
  std::string out_path;
};

int run_sweep(const SweepArgs& args) {
  const SimilarityMatrix matrix = read_matrix(args.matrix_path);
  const std::size_t n = matrix.size();
  const std::size_t k_max = args.k_max == 0 ? n : args.k_max;
  if (args.k_min < 1 || args.k_min > k_max || k_max > n) {
    throw Error(ErrorCode::InvalidConfig,
                "k range [" + std::to_string(args.k_min) + ", " + std::to_string(k_max) +
                    "] must lie within [1, " + std::to_string(n) + "]");
  }
  std::string csv = "k,overall_score\n";
  for (std::size_t k = args.k_min; k <= k_max; ++k) {
    GroupArgs group_args;
    group_args.k = k;
    group_args.mode = args.mode;
    group_args.max_group_size = args.max_group_size;
    group_args.workers = args.workers;
    const GroupingResult result = best_grouping(matrix, to_search_config(group_args));
    csv += std::to_string(k) + "," + format_double(result.overall) + "\n";
  }
  if (args.out_path.empty()) {
    std::cout << csv;
  } else {
    write_text_file(args.out_path, csv);
  }
  return 0;
}

struct CorrelateArgs {
  std::string a_path;
  std::string b_path;
  std::string out_path;
};

int run_correlate(const CorrelateArgs& args) {
  const SimilarityMatrix a = read_matrix(args.a_path);
  const SimilarityMatrix b = read_matrix(args.b_path);
  const double r = correlate_measures(a, b);
  std::cout << format_double(r) << '\n';
  if (!args.out_path.empty()) {
    std::string csv = "measure_a,measure_b,r\n";
    csv += file_stem(args.a_path) + "," + file_stem(args.b_path) + "," +
           format_double(r) + "\n";
    write_text_file(args.out_path, csv);
  }
  return 0;
}

struct KeywordsArgs {
  std::string corpus_dir;
  std::size_t top_k = 50;
  std::string stopwords_path;
  std::string out_path;
};

int run_keywords(const KeywordsArgs& args) {
  const auto corpus = read_corpus_dir(args.corpus_dir);
  std::set<std::string> stopwords;
  if (!args.stopwords_path.empty()) stopwords = read_stopwords(args.stopwords_path);
  const auto keywords = tfidf_keywords(corpus, args.top_k, stopwords);
  write_keywords(args.out_path, keywords);
  std::cout << "wrote keywords for " << keywords.size() << " tasks to "
            << args.out_path << '\n';
  return 0;
}

struct AssignArgs {
  std::string grouping_path;
  std::string matrix_path;
  std::string out_path;
};

int run_assign(const AssignArgs& args) {
  const GroupingResult stored = read_grouping(args.grouping_path);
  const SimilarityMatrix matrix = read_matrix(args.matrix_path);
  const GroupingResult result = score_grouping(stored.grouping, matrix);
  write_grouping(args.out_path, result);
  for (const auto& [task, group] : result.assignment) {
    std::cout << task << " -> group " << group << '\n';
  }
  return 0;
}

constexpr const char* kFormatsFooter = R"(File formats:
  trace config   JSON object:
                   {"train": {"epochs": int, "batch_size": int,
                              "learning_rate": num, "hidden_dim": int,
                              "seed": int},
                    "subsample_fraction": num in (0,1] (optional, default 1),
                    "tasks": [{"task": str, "cluster_id": int, "n_train": int,
                               "input_dim": int, "n_classes": int,
                               "noise_sigma": num, "seed": int}, ...]}
  traces         JSON Lines; per line
                   {"task": str, "epoch": int, "layer": str,
                    "vector": [num, ...]}
  matrix         {"labels": [str, ...], "kind": "gradient-cosine" |
                   "negated-distance" | "raw", "values": [[num, ...], ...]}
  distances      matrix-shaped JSON; symmetric, zero diagonal, entries >= 0
  grouping       {"k": int, "groups": [[str, ...], ...], "overall_score": num,
                  "per_task_collective": {str: num}, "assignment": {str: int}}
  keywords       {task: [keyword, ...]}
  corpus dir     one UTF-8 text file per task; label = file stem; tokens are
                 lowercased, whitespace-split, stripped of edge punctuation
  stopwords      one token per line
  sweep CSV      header "k,overall_score", one row per K
  correlate CSV  header "measure_a,measure_b,r", one row

Exit codes: 0 success, 2 config, 3 trace/similarity input, 4 grouping
infeasibility, 5 label mismatch, 6 corpus errors.)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group tasks for joint training by gradient similarity"};
  app.require_subcommand(1);
  app.footer(kFormatsFooter);

  TraceArgs trace_args;
  auto* trace_cmd = app.add_subcommand(
      "trace", "Train the synthetic multi-task model and write gradient traces (JSONL)");
  trace_cmd->add_option("--config", trace_args.config_path, "Trainer config JSON")
      ->required();
  trace_cmd->add_option("--out", trace_args.out_path, "Output trace file (JSONL)")
      ->required();

  SimilarityArgs sim_args;
  auto* sim_cmd = app.add_subcommand(
      "similarity", "Build a similarity matrix from traces or a distance matrix");
  auto* sim_traces = sim_cmd->add_option("--traces", sim_args.traces_path, "Trace file (JSONL)");
  auto* sim_dist = sim_cmd->add_option("--from-distances", sim_args.distances_path,
                                       "Distance matrix JSON (negated into similarities)");
  sim_cmd->add_option("--layer", sim_args.layer,
                      "Layer tag to average (default: classifier)");
  sim_cmd->add_option("--out", sim_args.out_path, "Output matrix JSON")->required();
  sim_traces->excludes(sim_dist);
  sim_dist->excludes(sim_traces);

  GroupArgs group_args;
  auto* group_cmd = app.add_subcommand(
      "group", "Search the best K covering groups for a similarity matrix");
  group_cmd->add_option("--matrix", group_args.matrix_path, "Similarity matrix JSON")
      ->required();
  group_cmd->add_option("--k", group_args.k, "Number of groups")->required();
  group_cmd->add_option("--mode", group_args.mode, "Search mode (default: branch-and-bound)")
      ->check(CLI::IsMember({"exhaustive", "branch-and-bound", "bnb"}));
  group_cmd->add_option("--max-group-size", group_args.max_group_size,
                        "Largest allowed group (default: unlimited)");
  group_cmd->add_option("--workers", group_args.workers,
                        "Parallel search workers (result is worker-count independent)");
  group_cmd->add_option("--out", group_args.out_path, "Output grouping JSON")->required();

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand(
      "sweep-k", "Best overall score for each K in a range (CSV)");
  sweep_cmd->add_option("--matrix", sweep_args.matrix_path, "Similarity matrix JSON")
      ->required();
  sweep_cmd->add_option("--k-min", sweep_args.k_min, "Smallest K (default: 1)");
  sweep_cmd->add_option("--k-max", sweep_args.k_max, "Largest K (default: task count)");
  sweep_cmd->add_option("--mode", sweep_args.mode, "Search mode")
      ->check(CLI::IsMember({"exhaustive", "branch-and-bound", "bnb"}));
  sweep_cmd->add_option("--max-group-size", sweep_args.max_group_size,
                        "Largest allowed group (default: unlimited)");
  sweep_cmd->add_option("--workers", sweep_args.workers, "Parallel search workers");
  sweep_cmd->add_option("--out", sweep_args.out_path, "Output CSV (default: stdout)");

  CorrelateArgs corr_args;
  auto* corr_cmd = app.add_subcommand(
      "correlate", "Pearson correlation between two similarity measures");
  corr_cmd->add_option("--a", corr_args.a_path, "First matrix JSON")->required();
  corr_cmd->add_option("--b", corr_args.b_path, "Second matrix JSON")->required();
  corr_cmd->add_option("--out", corr_args.out_path, "Optional CSV output");

  KeywordsArgs kw_args;
  auto* kw_cmd = app.add_subcommand(
      "keywords", "Top TF-IDF keywords per task from a corpus directory");
  kw_cmd->add_option("--corpus-dir", kw_args.corpus_dir, "Directory of per-task text files")
      ->required();
  kw_cmd->add_option("--top-k", kw_args.top_k, "Keywords per task (default: 50)");
  kw_cmd->add_option("--stopwords", kw_args.stopwords_path, "Stopword file, one per line");
  kw_cmd->add_option("--out", kw_args.out_path, "Output keywords JSON")->required();

  AssignArgs assign_args;
  auto* assign_cmd = app.add_subcommand(
      "assign", "Recompute scores and inference assignment for an existing grouping");
  assign_cmd->add_option("--grouping", assign_args.grouping_path, "Grouping JSON")
      ->required();
  assign_cmd->add_option("--matrix", assign_args.matrix_path, "Similarity matrix JSON")
      ->required();
  assign_cmd->add_option("--out", assign_args.out_path, "Output grouping JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  int io_default = 2;
  try {
    if (trace_cmd->parsed()) return run_trace(trace_args);
    if (sim_cmd->parsed()) {
      io_default = 3;
      if (sim_args.traces_path.empty() && sim_args.distances_path.empty()) {
        std::cerr << "error: similarity needs --traces or --from-distances\n";
        return 2;
      }
      return run_similarity(sim_args);
    }
    if (group_cmd->parsed()) {
      io_default = 3;
      return run_group(group_args);
    }
    if (sweep_cmd->parsed()) {
      io_default = 3;
      return run_sweep(sweep_args);
    }
    if (corr_cmd->parsed()) {
      io_default = 3;
      return run_correlate(corr_args);
    }
    if (kw_cmd->parsed()) {
      io_default = 6;
      return run_keywords(kw_args);
    }
    if (assign_cmd->parsed()) {
      io_default = 3;
      return run_assign(assign_args);
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code_for(err, io_default);
  } catch (const std::exception& err) {
    std::cerr << "unexpected error: " << err.what() << '\n';
    return 1;
  }
  return 1;
}
