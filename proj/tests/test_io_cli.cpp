#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "taskgroup/io.hpp"
#include "taskgroup/rng.hpp"

using namespace taskgroup;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("taskgroup_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(TASKGROUP_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

int run_cli_capture(const std::string& args, const std::string& stdout_path,
                    const std::string& stderr_path) {
  const std::string cmd = std::string(TASKGROUP_CLI_PATH) + " " + args + " >" +
                          stdout_path + " 2>" + stderr_path;
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

const char* kDemoConfig = R"({
  "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.2,
            "hidden_dim": 8, "seed": 7},
  "tasks": [
    {"task": "a0", "cluster_id": 0, "n_train": 40, "input_dim": 6,
     "n_classes": 3, "noise_sigma": 0.1, "seed": 1},
    {"task": "a1", "cluster_id": 0, "n_train": 40, "input_dim": 6,
     "n_classes": 3, "noise_sigma": 0.1, "seed": 2},
    {"task": "b0", "cluster_id": 1, "n_train": 40, "input_dim": 6,
     "n_classes": 3, "noise_sigma": 0.1, "seed": 3}
  ]
})";

std::vector<GradientTrace> sample_traces() {
  std::vector<GradientTrace> traces;
  std::mt19937_64 rng(404);
  for (const char* task : {"x", "y"}) {
    for (int epoch = 0; epoch < 2; ++epoch) {
      for (const char* layer : {"encoder", "classifier"}) {
        GradientTrace trace;
        trace.task = task;
        trace.epoch = epoch;
        trace.layer = layer;
        for (int i = 0; i < 5; ++i) trace.vector.push_back(uniform(rng, -2.0, 2.0));
        traces.push_back(std::move(trace));
      }
    }
  }
  return traces;
}

}  // namespace

TEST_CASE("trace files round-trip bit-exactly") {
  TempDir tmp;
  const auto traces = sample_traces();
  write_traces(tmp.file("t.jsonl"), traces);
  const auto loaded = read_traces(tmp.file("t.jsonl"));
  REQUIRE(loaded.size() == traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    CHECK(loaded[i].task == traces[i].task);
    CHECK(loaded[i].epoch == traces[i].epoch);
    CHECK(loaded[i].layer == traces[i].layer);
    CHECK(loaded[i].vector == traces[i].vector);
  }
  CHECK(trace_task_order(loaded) == std::vector<TaskLabel>{"x", "y"});
}

TEST_CASE("matrix files round-trip bit-exactly") {
  TempDir tmp;
  SimilarityMatrix matrix;
  matrix.labels = {"a", "b", "c"};
  matrix.kind = MatrixKind::GradientCosine;
  matrix.values = {{1.0, 0.123456789012345678, -0.5},
                   {0.123456789012345678, 1.0, 0.25},
                   {-0.5, 0.25, 1.0}};
  write_matrix(tmp.file("m.json"), matrix);
  const auto loaded = read_matrix(tmp.file("m.json"));
  CHECK(loaded.labels == matrix.labels);
  CHECK(loaded.kind == matrix.kind);
  CHECK(loaded.values == matrix.values);
}

TEST_CASE("duplicate trace records are rejected on load") {
  TempDir tmp;
  std::ofstream out(tmp.file("dup.jsonl"));
  out << R"({"task":"a","epoch":0,"layer":"classifier","vector":[1.0]})" << "\n";
  out << R"({"task":"a","epoch":0,"layer":"classifier","vector":[2.0]})" << "\n";
  out.close();
  try {
    read_traces(tmp.file("dup.jsonl"));
    FAIL("expected DuplicateTrace");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::DuplicateTrace);
  }
}

TEST_CASE("cli trace writes the full record set deterministically") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("config.json"));
    out << kDemoConfig;
  }
  CHECK(run_cli("trace --config " + tmp.file("config.json") + " --out " +
                tmp.file("run1.jsonl")) == 0);
  CHECK(run_cli("trace --config " + tmp.file("config.json") + " --out " +
                tmp.file("run2.jsonl")) == 0);

  const auto traces = read_traces(tmp.file("run1.jsonl"));
  CHECK(traces.size() == 3u * 2u * 2u);  // tasks x epochs x layers

  CHECK(read_text_file(tmp.file("run1.jsonl")) == read_text_file(tmp.file("run2.jsonl")));
}

TEST_CASE("cli trace rejects corrupt configs with exit 2 naming the key") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("bad.json"));
    out << R"({"train": {"epochs": 1, "batch_size": 4, "learning_rate": 0.1,
                "hidden_dim": 4, "seed": 1, "typo_key": 9},
               "tasks": [{"task": "a", "cluster_id": 0, "n_train": 10,
                          "input_dim": 4, "n_classes": 2, "noise_sigma": 0.0,
                          "seed": 1}]})";
  }
  const int code = run_cli_capture("trace --config " + tmp.file("bad.json") +
                                       " --out " + tmp.file("out.jsonl"),
                                   tmp.file("stdout.txt"), tmp.file("stderr.txt"));
  CHECK(code == 2);
  const auto message = read_text_file(tmp.file("stderr.txt"));
  CHECK(message.find("typo_key") != std::string::npos);

  CHECK(run_cli("trace --config " + tmp.file("missing.json") + " --out " +
                tmp.file("out.jsonl")) == 2);
}

TEST_CASE("cli similarity end-to-end plus error codes") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("config.json"));
    out << kDemoConfig;
  }
  REQUIRE(run_cli("trace --config " + tmp.file("config.json") + " --out " +
                  tmp.file("traces.jsonl")) == 0);
  CHECK(run_cli("similarity --traces " + tmp.file("traces.jsonl") +
                " --layer classifier --out " + tmp.file("sim.json")) == 0);
  const auto matrix = read_matrix(tmp.file("sim.json"));
  CHECK(matrix.size() == 3);
  CHECK(matrix.kind == MatrixKind::GradientCosine);

  // unknown layer
  CHECK(run_cli("similarity --traces " + tmp.file("traces.jsonl") +
                " --layer bogus --out " + tmp.file("x.json")) == 3);

  // single-task trace file gives the 1x1 convention
  {
    std::ofstream out(tmp.file("solo.jsonl"));
    out << R"({"task":"solo","epoch":0,"layer":"classifier","vector":[1.0,2.0]})" << "\n";
  }
  CHECK(run_cli("similarity --traces " + tmp.file("solo.jsonl") +
                " --layer classifier --out " + tmp.file("solo.json")) == 0);
  const auto solo = read_matrix(tmp.file("solo.json"));
  CHECK(solo.size() == 1);
  CHECK(solo.values[0][0] == 1.0);
}

TEST_CASE("cli similarity reports dropped epochs instead of silently trimming") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("ragged.jsonl"));
    out << R"({"task":"a","epoch":0,"layer":"classifier","vector":[1.0,0.0]})" << "\n";
    out << R"({"task":"a","epoch":1,"layer":"classifier","vector":[1.0,0.5]})" << "\n";
    out << R"({"task":"b","epoch":0,"layer":"classifier","vector":[0.5,1.0]})" << "\n";
  }
  const int code = run_cli_capture("similarity --traces " + tmp.file("ragged.jsonl") +
                                       " --layer classifier --out " + tmp.file("m.json"),
                                   tmp.file("stdout.txt"), tmp.file("stderr.txt"));
  CHECK(code == 0);
  const auto warning = read_text_file(tmp.file("stderr.txt"));
  CHECK(warning.find("dropping epoch 1") != std::string::npos);
  CHECK(warning.find("'a'") != std::string::npos);

  // disjoint epoch sets: refuse with the task/epoch listing
  {
    std::ofstream out(tmp.file("disjoint.jsonl"));
    out << R"({"task":"a","epoch":0,"layer":"classifier","vector":[1.0,0.0]})" << "\n";
    out << R"({"task":"b","epoch":1,"layer":"classifier","vector":[0.5,1.0]})" << "\n";
  }
  const int disjoint = run_cli_capture(
      "similarity --traces " + tmp.file("disjoint.jsonl") + " --layer classifier --out " +
          tmp.file("d.json"),
      tmp.file("stdout2.txt"), tmp.file("stderr2.txt"));
  CHECK(disjoint == 3);
  const auto message = read_text_file(tmp.file("stderr2.txt"));
  CHECK(message.find("a has epochs {0}") != std::string::npos);
  CHECK(message.find("b has epochs {1}") != std::string::npos);
}

TEST_CASE("cli similarity converts distance matrices") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("dist.json"));
    out << R"({"labels": ["a", "b"], "kind": "raw", "values": [[0.0, 2.0], [2.0, 0.0]]})";
  }
  CHECK(run_cli("similarity --from-distances " + tmp.file("dist.json") + " --out " +
                tmp.file("sim.json")) == 0);
  const auto matrix = read_matrix(tmp.file("sim.json"));
  CHECK(matrix.kind == MatrixKind::NegatedDistance);
  CHECK(matrix.values[0][1] == -2.0);
}

TEST_CASE("cli group picks the planted partition and honours exit codes") {
  TempDir tmp;
  SimilarityMatrix matrix;
  matrix.labels = {"a", "b", "c", "d"};
  matrix.kind = MatrixKind::Raw;
  matrix.values = {{1.0, 0.9, -0.2, -0.2},
                   {0.9, 1.0, -0.2, -0.2},
                   {-0.2, -0.2, 1.0, 0.9},
                   {-0.2, -0.2, 0.9, 1.0}};
  write_matrix(tmp.file("m.json"), matrix);

  CHECK(run_cli("group --matrix " + tmp.file("m.json") + " --k 2 --out " +
                tmp.file("g.json")) == 0);
  const auto result = read_grouping(tmp.file("g.json"));
  const std::vector<std::vector<TaskLabel>> expected = {{"a", "b"}, {"c", "d"}};
  CHECK(result.grouping.groups == expected);
  CHECK(result.assignment.at("a") == 0);
  CHECK(result.assignment.at("d") == 1);

  // exhaustive mode agrees byte for byte
  CHECK(run_cli("group --matrix " + tmp.file("m.json") +
                " --k 2 --mode exhaustive --out " + tmp.file("gx.json")) == 0);
  CHECK(read_text_file(tmp.file("gx.json")) == read_text_file(tmp.file("g.json")));

  // k = 1: the single all-task group
  CHECK(run_cli("group --matrix " + tmp.file("m.json") + " --k 1 --out " +
                tmp.file("g1.json")) == 0);
  const auto single = read_grouping(tmp.file("g1.json"));
  REQUIRE(single.grouping.groups.size() == 1);
  CHECK(single.grouping.groups[0].size() == 4);

  // k > N is infeasible
  CHECK(run_cli("group --matrix " + tmp.file("m.json") + " --k 5 --out " +
                tmp.file("g5.json")) == 4);
}

TEST_CASE("cli sweep-k emits one row per K with non-decreasing scores") {
  TempDir tmp;
  std::mt19937_64 rng(6060);
  SimilarityMatrix matrix;
  matrix.labels = {"a", "b", "c", "d", "e"};
  matrix.kind = MatrixKind::Raw;
  matrix.values.assign(5, std::vector<double>(5, 1.0));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) {
      const double v = uniform(rng, -1.0, 1.0);
      matrix.values[i][j] = v;
      matrix.values[j][i] = v;
    }
  }
  write_matrix(tmp.file("m.json"), matrix);

  CHECK(run_cli("sweep-k --matrix " + tmp.file("m.json") + " --out " +
                tmp.file("sweep.csv")) == 0);
  const auto csv = read_text_file(tmp.file("sweep.csv"));
  std::vector<std::string> lines;
  {
    std::istringstream stream(csv);
    std::string line;
    while (std::getline(stream, line)) {
      if (!line.empty()) lines.push_back(line);
    }
  }
  REQUIRE(lines.size() == 6);  // header + K = 1..5
  CHECK(lines[0] == "k,overall_score");
  CHECK(lines.back().substr(0, 2) == "5,");
  double previous = -1e300;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto comma = lines[i].find(',');
    const double score = std::stod(lines[i].substr(comma + 1));
    CHECK(score >= previous);
    previous = score;
  }

  // single-K range: exactly one row
  CHECK(run_cli("sweep-k --matrix " + tmp.file("m.json") +
                " --k-min 3 --k-max 3 --out " + tmp.file("one.csv")) == 0);
  const auto one = read_text_file(tmp.file("one.csv"));
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);

  // out-of-range
  CHECK(run_cli("sweep-k --matrix " + tmp.file("m.json") + " --k-min 0") == 2);
  CHECK(run_cli("sweep-k --matrix " + tmp.file("m.json") + " --k-max 9") == 2);
}

TEST_CASE("cli correlate prints r and enforces label agreement") {
  TempDir tmp;
  SimilarityMatrix matrix;
  matrix.labels = {"a", "b", "c"};
  matrix.kind = MatrixKind::Raw;
  matrix.values = {{1.0, 0.5, -0.25}, {0.5, 1.0, 0.75}, {-0.25, 0.75, 1.0}};
  write_matrix(tmp.file("a.json"), matrix);

  const int code = run_cli_capture(
      "correlate --a " + tmp.file("a.json") + " --b " + tmp.file("a.json") +
          " --out " + tmp.file("corr.csv"),
      tmp.file("stdout.txt"), tmp.file("stderr.txt"));
  CHECK(code == 0);
  CHECK(read_text_file(tmp.file("stdout.txt")) == "1.0\n");
  const auto csv = read_text_file(tmp.file("corr.csv"));
  CHECK(csv == "measure_a,measure_b,r\na,a,1.0\n");

  auto other = matrix;
  other.labels = {"a", "b", "zzz"};
  write_matrix(tmp.file("b.json"), other);
  CHECK(run_cli("correlate --a " + tmp.file("a.json") + " --b " + tmp.file("b.json")) == 5);
}

TEST_CASE("cli keywords extracts planted terms and flags empty corpora") {
  TempDir tmp;
  fs::create_directories(tmp.path / "corpus");
  {
    std::ofstream out(tmp.path / "corpus" / "red.txt");
    out << "crimson crimson crimson shared filler\n";
  }
  {
    std::ofstream out(tmp.path / "corpus" / "blue.txt");
    out << "azure azure azure shared filler\n";
  }
  CHECK(run_cli("keywords --corpus-dir " + (tmp.path / "corpus").string() +
                " --top-k 1 --out " + tmp.file("kw.json")) == 0);
  const auto text = read_text_file(tmp.file("kw.json"));
  CHECK(text.find("crimson") != std::string::npos);
  CHECK(text.find("azure") != std::string::npos);
  CHECK(text.find("shared") == std::string::npos);  // df = D exclusion

  fs::create_directories(tmp.path / "empty");
  CHECK(run_cli("keywords --corpus-dir " + (tmp.path / "empty").string() +
                " --top-k 5 --out " + tmp.file("kw2.json")) == 6);
}

TEST_CASE("cli assign recomputes the inference assignment") {
  TempDir tmp;
  SimilarityMatrix matrix;
  matrix.labels = {"a", "b", "c"};
  matrix.kind = MatrixKind::Raw;
  matrix.values = {{1.0, 0.9, 0.1}, {0.9, 1.0, 0.1}, {0.1, 0.1, 1.0}};
  write_matrix(tmp.file("m.json"), matrix);

  REQUIRE(run_cli("group --matrix " + tmp.file("m.json") + " --k 2 --out " +
                  tmp.file("g.json")) == 0);
  CHECK(run_cli("assign --grouping " + tmp.file("g.json") + " --matrix " +
                tmp.file("m.json") + " --out " + tmp.file("g2.json")) == 0);
  CHECK(read_text_file(tmp.file("g.json")) == read_text_file(tmp.file("g2.json")));
}

TEST_CASE("cli help succeeds and documents subcommands") {
  TempDir tmp;
  const int code = run_cli_capture("--help", tmp.file("stdout.txt"), tmp.file("stderr.txt"));
  CHECK(code == 0);
  const auto help = read_text_file(tmp.file("stdout.txt"));
  for (const char* name : {"trace", "similarity", "group", "sweep-k", "correlate",
                           "keywords", "assign"}) {
    CHECK(help.find(name) != std::string::npos);
  }
}
