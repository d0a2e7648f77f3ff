#include "taskgroup/io.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace taskgroup {

namespace {

using nlohmann::json;

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& err) {
    throw Error(ErrorCode::InvalidConfig,
                "malformed JSON in '" + path + "': " + err.what());
  }
}

void reject_unknown_keys(const json& object, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : object.items()) {
    if (!allowed.count(key)) {
      throw Error(ErrorCode::InvalidConfig,
                  "unknown key '" + key + "' in " + where);
    }
  }
}

const json& require(const json& object, const std::string& key, const std::string& where) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw Error(ErrorCode::InvalidConfig, "missing key '" + key + "' in " + where);
  }
  return *it;
}

template <typename T>
T get_as(const json& value, const std::string& key, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidConfig,
                "bad value for key '" + key + "' in " + where);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  }
  return out;
}

}  // namespace

TrainerRun read_trainer_config(const std::string& path) {
  const json root = parse_file(path);
  if (!root.is_object()) {
    throw Error(ErrorCode::InvalidConfig, "config root must be an object");
  }
  reject_unknown_keys(root, {"train", "tasks", "subsample_fraction"}, "config");

  TrainerRun run;
  const json& train = require(root, "train", "config");
  reject_unknown_keys(train, {"epochs", "batch_size", "learning_rate", "hidden_dim", "seed"},
                      "config.train");
  run.train.epochs = get_as<int>(require(train, "epochs", "config.train"), "epochs", "config.train");
  run.train.batch_size =
      get_as<int>(require(train, "batch_size", "config.train"), "batch_size", "config.train");
  run.train.learning_rate = get_as<double>(require(train, "learning_rate", "config.train"),
                                           "learning_rate", "config.train");
  run.train.hidden_dim =
      get_as<int>(require(train, "hidden_dim", "config.train"), "hidden_dim", "config.train");
  run.train.seed = get_as<std::uint64_t>(require(train, "seed", "config.train"), "seed",
                                         "config.train");

  if (root.contains("subsample_fraction")) {
    run.subsample_fraction = get_as<double>(root.at("subsample_fraction"),
                                            "subsample_fraction", "config");
    if (run.subsample_fraction <= 0.0 || run.subsample_fraction > 1.0) {
      throw Error(ErrorCode::InvalidConfig, "subsample_fraction must be in (0, 1]");
    }
  }

  const json& tasks = require(root, "tasks", "config");
  if (!tasks.is_array() || tasks.empty()) {
    throw Error(ErrorCode::InvalidConfig, "config.tasks must be a non-empty array");
  }
  for (const auto& entry : tasks) {
    const std::string where = "config.tasks[" + std::to_string(run.tasks.size()) + "]";
    reject_unknown_keys(entry,
                        {"task", "cluster_id", "n_train", "input_dim", "n_classes",
                         "noise_sigma", "seed"},
                        where);
    SyntheticTaskSpec spec;
    spec.task = get_as<std::string>(require(entry, "task", where), "task", where);
    spec.cluster_id = get_as<int>(require(entry, "cluster_id", where), "cluster_id", where);
    spec.n_train = get_as<int>(require(entry, "n_train", where), "n_train", where);
    spec.input_dim = get_as<int>(require(entry, "input_dim", where), "input_dim", where);
    spec.n_classes = get_as<int>(require(entry, "n_classes", where), "n_classes", where);
    spec.noise_sigma =
        get_as<double>(require(entry, "noise_sigma", where), "noise_sigma", where);
    spec.seed = get_as<std::uint64_t>(require(entry, "seed", where), "seed", where);
    if (spec.task.empty()) {
      throw Error(ErrorCode::InvalidConfig, "empty task label in " + where);
    }
    run.tasks.push_back(std::move(spec));
  }
  {
    std::set<TaskLabel> unique;
    for (const auto& spec : run.tasks) {
      if (!unique.insert(spec.task).second) {
        throw Error(ErrorCode::InvalidConfig, "duplicate task label '" + spec.task + "'");
      }
    }
  }
  return run;
}

void write_traces(const std::string& path, const std::vector<GradientTrace>& traces) {
  auto out = open_out(path);
  for (const auto& trace : traces) {
    json record;
    record["task"] = trace.task;
    record["epoch"] = trace.epoch;
    record["layer"] = trace.layer;
    record["vector"] = trace.vector;
    out << record.dump() << '\n';
  }
  if (!out) {
    throw Error(ErrorCode::IoError, "failed while writing '" + path + "'");
  }
}

std::vector<GradientTrace> read_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  }
  std::vector<GradientTrace> traces;
  std::set<std::tuple<TaskLabel, int, std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& err) {
      throw Error(ErrorCode::InvalidConfig, "malformed JSON at " + where + ": " + err.what());
    }
    reject_unknown_keys(record, {"task", "epoch", "layer", "vector"}, where);
    GradientTrace trace;
    trace.task = get_as<std::string>(require(record, "task", where), "task", where);
    trace.epoch = get_as<int>(require(record, "epoch", where), "epoch", where);
    trace.layer = get_as<std::string>(require(record, "layer", where), "layer", where);
    trace.vector =
        get_as<std::vector<double>>(require(record, "vector", where), "vector", where);
    if (trace.task.empty() || trace.layer.empty()) {
      throw Error(ErrorCode::InvalidConfig, "empty task or layer at " + where);
    }
    if (trace.epoch < 0) {
      throw Error(ErrorCode::InvalidConfig, "negative epoch at " + where);
    }
    if (trace.vector.empty()) {
      throw Error(ErrorCode::InvalidConfig, "empty gradient vector at " + where);
    }
    if (!seen.insert({trace.task, trace.epoch, trace.layer}).second) {
      throw Error(ErrorCode::DuplicateTrace,
                  "duplicate (task, epoch, layer) record at " + where);
    }
    traces.push_back(std::move(trace));
  }
  if (traces.empty()) {
    throw Error(ErrorCode::MissingTrace, "no trace records in '" + path + "'");
  }
  return traces;
}

std::vector<TaskLabel> trace_task_order(const std::vector<GradientTrace>& traces) {
  std::vector<TaskLabel> order;
  std::set<TaskLabel> seen;
  for (const auto& trace : traces) {
    if (seen.insert(trace.task).second) order.push_back(trace.task);
  }
  return order;
}

void write_matrix(const std::string& path, const SimilarityMatrix& matrix) {
  validate_matrix(matrix);
  json root;
  root["labels"] = matrix.labels;
  root["kind"] = to_string(matrix.kind);
  root["values"] = matrix.values;
  auto out = open_out(path);
  out << root.dump(2) << '\n';
}

SimilarityMatrix read_matrix(const std::string& path) {
  const json root = parse_file(path);
  reject_unknown_keys(root, {"labels", "kind", "values"}, path);
  SimilarityMatrix matrix;
  matrix.labels =
      get_as<std::vector<TaskLabel>>(require(root, "labels", path), "labels", path);
  matrix.kind = matrix_kind_from_string(
      get_as<std::string>(require(root, "kind", path), "kind", path));
  matrix.values = get_as<std::vector<std::vector<double>>>(require(root, "values", path),
                                                           "values", path);
  validate_matrix(matrix);
  return matrix;
}

std::pair<std::vector<TaskLabel>, std::vector<std::vector<double>>> read_distances(
    const std::string& path) {
  const json root = parse_file(path);
  reject_unknown_keys(root, {"labels", "kind", "values"}, path);
  auto labels = get_as<std::vector<TaskLabel>>(require(root, "labels", path), "labels", path);
  auto values = get_as<std::vector<std::vector<double>>>(require(root, "values", path),
                                                         "values", path);
  return {std::move(labels), std::move(values)};
}

void write_grouping(const std::string& path, const GroupingResult& result) {
  json root;
  root["k"] = result.grouping.groups.size();
  root["groups"] = result.grouping.groups;
  root["overall_score"] = result.overall;
  root["per_task_collective"] = result.per_task_collective;
  root["assignment"] = result.assignment;
  auto out = open_out(path);
  out << root.dump(2) << '\n';
}

GroupingResult read_grouping(const std::string& path) {
  const json root = parse_file(path);
  reject_unknown_keys(root, {"k", "groups", "overall_score", "per_task_collective", "assignment"},
                      path);
  GroupingResult result;
  result.grouping.groups = get_as<std::vector<std::vector<TaskLabel>>>(
      require(root, "groups", path), "groups", path);
  const auto k = get_as<std::size_t>(require(root, "k", path), "k", path);
  if (k != result.grouping.groups.size()) {
    throw Error(ErrorCode::InvalidConfig,
                "grouping file k does not match group count in " + path);
  }
  result.overall =
      get_as<double>(require(root, "overall_score", path), "overall_score", path);
  result.per_task_collective = get_as<std::map<TaskLabel, double>>(
      require(root, "per_task_collective", path), "per_task_collective", path);
  result.assignment = get_as<std::map<TaskLabel, std::size_t>>(
      require(root, "assignment", path), "assignment", path);
  std::set<TaskLabel> labels;
  for (const auto& group : result.grouping.groups) {
    for (const auto& member : group) labels.insert(member);
  }
  result.grouping.labels.assign(labels.begin(), labels.end());
  return result;
}

std::vector<CorpusDoc> read_corpus_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::EmptyCorpus, "'" + dir + "' is not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw Error(ErrorCode::EmptyCorpus, "no corpus files in '" + dir + "'");
  }
  std::vector<CorpusDoc> corpus;
  corpus.reserve(files.size());
  for (const auto& file : files) {
    CorpusDoc doc;
    doc.task = file.stem().string();
    doc.tokens = tokenize(read_text_file(file.string()));
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

std::set<std::string> read_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open stopword file '" + path + "'");
  }
  std::set<std::string> stopwords;
  std::string line;
  while (std::getline(in, line)) {
    for (const auto& token : tokenize(line)) stopwords.insert(token);
  }
  return stopwords;
}

void write_keywords(const std::string& path,
                    const std::map<TaskLabel, std::vector<std::string>>& keywords) {
  json root(keywords);
  auto out = open_out(path);
  out << root.dump(2) << '\n';
}

void write_text_file(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  if (!out) {
    throw Error(ErrorCode::IoError, "failed while writing '" + path + "'");
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace taskgroup
