#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "taskgroup/rng.hpp"
#include "taskgroup/similarity.hpp"
#include "taskgroup/trainer.hpp"

using namespace taskgroup;

namespace {

Dataset make_dataset(const TaskLabel& task, int input_dim, int n_classes,
                     std::vector<double> features, std::vector<int> labels) {
  Dataset data;
  data.task = task;
  data.input_dim = input_dim;
  data.n_classes = n_classes;
  data.features = std::move(features);
  data.labels = std::move(labels);
  return data;
}

ModelParams random_params(int input_dim, int hidden_dim, int n_classes,
                          std::uint64_t seed) {
  ModelParams params = init_params(input_dim, hidden_dim, n_classes, seed);
  GaussianSampler sampler(mix_seed(seed, 77));
  for (auto& b : params.encoder_bias) b = 0.3 * sampler.next();
  for (auto& b : params.classifier_bias) b = 0.3 * sampler.next();
  return params;
}

Dataset random_dataset(const TaskLabel& task, int input_dim, int n_classes,
                       std::size_t n, std::uint64_t seed) {
  GaussianSampler sampler(seed);
  std::vector<double> features(n * static_cast<std::size_t>(input_dim));
  for (auto& x : features) x = sampler.next();
  std::vector<int> labels(n);
  for (auto& y : labels) {
    y = static_cast<int>(sampler.engine()() % static_cast<std::uint64_t>(n_classes));
  }
  return make_dataset(task, input_dim, n_classes, std::move(features), std::move(labels));
}

// Central finite differences on one flattened coordinate. The flattening
// order (row-major weights, then bias) matches backward_grads.
double* coordinate(ModelParams& params, const std::string& layer, std::size_t index) {
  if (layer == kEncoderLayer) {
    return index < params.encoder_weight.size()
               ? &params.encoder_weight[index]
               : &params.encoder_bias[index - params.encoder_weight.size()];
  }
  return index < params.classifier_weight.size()
             ? &params.classifier_weight[index]
             : &params.classifier_bias[index - params.classifier_weight.size()];
}

double fd_gradient(const ModelParams& params, const Batch& batch,
                   const std::string& layer, std::size_t index, double step) {
  ModelParams plus = params;
  *coordinate(plus, layer, index) += step;
  ModelParams minus = params;
  *coordinate(minus, layer, index) -= step;
  return (forward_loss(plus, batch) - forward_loss(minus, batch)) / (2.0 * step);
}

std::vector<SyntheticTaskSpec> cluster_specs(int n_clusters, int tasks_per_cluster,
                                             int n_train, double noise,
                                             std::uint64_t seed) {
  std::vector<SyntheticTaskSpec> specs;
  for (int c = 0; c < n_clusters; ++c) {
    for (int t = 0; t < tasks_per_cluster; ++t) {
      SyntheticTaskSpec spec;
      spec.task = std::string(1, static_cast<char>('a' + c)) + std::to_string(t);
      spec.cluster_id = c;
      spec.n_train = n_train;
      spec.input_dim = 10;
      spec.n_classes = 3;
      spec.noise_sigma = noise;
      spec.seed = mix_seed(seed, static_cast<std::uint64_t>(c * 100 + t));
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

}  // namespace

TEST_CASE("uniform logits give ln(n_classes) loss") {
  ModelParams params;
  params.input_dim = 3;
  params.hidden_dim = 2;
  params.n_classes = 4;
  params.encoder_weight.assign(6, 0.0);
  params.encoder_bias.assign(2, 0.0);
  params.classifier_weight.assign(8, 0.0);
  params.classifier_bias.assign(4, 0.0);
  const auto data = make_dataset("t", 3, 4, {1.0, -2.0, 0.5, 0.0, 1.0, 2.0}, {2, 0});
  CHECK(forward_loss(params, full_batch(data)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("duplicating every example changes neither loss nor gradients") {
  const auto params = random_params(4, 3, 3, 21);
  const auto data = random_dataset("t", 4, 3, 6, 22);
  Dataset doubled = data;
  doubled.features.insert(doubled.features.end(), data.features.begin(), data.features.end());
  doubled.labels.insert(doubled.labels.end(), data.labels.begin(), data.labels.end());

  CHECK(forward_loss(params, full_batch(doubled)) ==
        doctest::Approx(forward_loss(params, full_batch(data))).epsilon(1e-12));

  const auto g1 = backward_grads(params, full_batch(data));
  const auto g2 = backward_grads(params, full_batch(doubled));
  for (std::size_t i = 0; i < g1.encoder.size(); ++i) {
    CHECK(g2.encoder[i] == doctest::Approx(g1.encoder[i]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < g1.classifier.size(); ++i) {
    CHECK(g2.classifier[i] == doctest::Approx(g1.classifier[i]).epsilon(1e-12));
  }
}

TEST_CASE("zero inputs and zero weights: known gradient shape") {
  ModelParams params;
  params.input_dim = 2;
  params.hidden_dim = 3;
  params.n_classes = 4;
  params.encoder_weight.assign(6, 0.0);
  params.encoder_bias.assign(3, 0.0);
  params.classifier_weight.assign(12, 0.0);
  params.classifier_bias.assign(4, 0.0);
  const auto data = make_dataset("t", 2, 4, {0, 0, 0, 0}, {1, 3});

  const auto grads = backward_grads(params, full_batch(data));
  // classifier bias: softmax-uniform minus one-hot mean
  const double quarter = 0.25;
  const std::size_t cw = params.classifier_weight.size();
  CHECK(grads.classifier[cw + 0] == doctest::Approx(quarter).epsilon(1e-15));
  CHECK(grads.classifier[cw + 1] == doctest::Approx(quarter - 0.5).epsilon(1e-15));
  CHECK(grads.classifier[cw + 2] == doctest::Approx(quarter).epsilon(1e-15));
  CHECK(grads.classifier[cw + 3] == doctest::Approx(quarter - 0.5).epsilon(1e-15));
  // encoder weights see zero features
  for (std::size_t i = 0; i < params.encoder_weight.size(); ++i) {
    CHECK(grads.encoder[i] == 0.0);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(314);
  const double step = 1e-5;
  for (int draw = 0; draw < 20; ++draw) {
    const auto params = random_params(5, 4, 3, rng());
    const auto data = random_dataset("t", 5, 3, 8, rng());
    const auto batch = full_batch(data);
    const auto grads = backward_grads(params, batch);

    for (const std::string layer : {kEncoderLayer, kClassifierLayer}) {
      const auto& flat = layer == kEncoderLayer ? grads.encoder : grads.classifier;
      for (int probe = 0; probe < 5; ++probe) {
        const std::size_t index = rng() % flat.size();
        const double fd = fd_gradient(params, batch, layer, index, step);
        const double analytic = flat[index];
        const double rel = std::abs(analytic - fd) / std::max(1e-6, std::abs(fd));
        CHECK(rel <= 1e-4);
      }
    }
  }
}

TEST_CASE("dataset generation is seed-deterministic") {
  const auto specs = cluster_specs(2, 1, 50, 0.05, 0);
  const auto a = generate_synthetic_tasks(specs);
  const auto b = generate_synthetic_tasks(specs);
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].features == b[t].features);
    CHECK(a[t].labels == b[t].labels);
  }
}

TEST_CASE("identical features imply identical labels when noise is zero") {
  // two same-cluster tasks with the same seed draw the same features, so
  // the noise-free labeling must agree example by example
  auto specs = cluster_specs(1, 2, 150, 0.0, 9);
  specs[1].seed = specs[0].seed;
  const auto datasets = generate_synthetic_tasks(specs);
  CHECK(datasets[0].features == datasets[1].features);
  CHECK(datasets[0].labels == datasets[1].labels);
}

TEST_CASE("specs disagreeing on shape are rejected") {
  auto specs = cluster_specs(2, 1, 20, 0.0, 5);
  specs[1].input_dim = 11;
  try {
    generate_synthetic_tasks(specs);
    FAIL("expected InconsistentDims");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::InconsistentDims);
  }
}

TEST_CASE("planted concepts of distinct clusters have non-positive cosine") {
  // observable consequence: a model fit on one cluster's task transfers to
  // its partner task but not to tasks of other clusters
  const auto specs = cluster_specs(3, 2, 500, 0.0, 1234);
  const auto datasets = generate_synthetic_tasks(specs);

  TrainConfig config;
  config.epochs = 40;
  config.batch_size = 50;
  config.learning_rate = 0.5;
  config.hidden_dim = 16;
  config.seed = 4321;
  const auto result = train_and_capture({datasets[0]}, config);

  const double same_cluster = evaluate_accuracy(result.params, datasets[1]);
  const double other_cluster = evaluate_accuracy(result.params, datasets[2]);
  CHECK(same_cluster >= 0.95);
  CHECK(other_cluster < same_cluster);
}

TEST_CASE("single task, single batch, one epoch traces the exact gradient") {
  const auto data = random_dataset("t", 4, 3, 10, 50);
  TrainConfig config;
  config.epochs = 1;
  config.batch_size = 32;  // > n: one batch
  config.learning_rate = 0.1;
  config.hidden_dim = 5;
  config.seed = 8;
  const auto result = train_and_capture({data}, config);
  REQUIRE(result.traces.size() == 2);

  const auto params = init_params(4, 5, 3, config.seed);
  const auto grads = backward_grads(params, full_batch(data));
  for (const auto& trace : result.traces) {
    const auto& expected = trace.layer == kEncoderLayer ? grads.encoder : grads.classifier;
    CHECK(trace.vector == expected);
  }
}

TEST_CASE("identical datasets produce identical traces and unit similarity") {
  auto data_a = random_dataset("a", 6, 3, 40, 77);
  auto data_b = data_a;
  data_b.task = "b";
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 10;
  config.learning_rate = 0.2;
  config.hidden_dim = 8;
  config.seed = 15;
  const auto result = train_and_capture({data_a, data_b}, config);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const std::string layer : {kEncoderLayer, kClassifierLayer}) {
      const GradientTrace* a = nullptr;
      const GradientTrace* b = nullptr;
      for (const auto& trace : result.traces) {
        if (trace.epoch != epoch || trace.layer != layer) continue;
        (trace.task == "a" ? a : b) = &trace;
      }
      REQUIRE(a != nullptr);
      REQUIRE(b != nullptr);
      CHECK(a->vector == b->vector);
    }
  }

  const auto matrix =
      epoch_similarity_average(result.traces, kClassifierLayer, {"a", "b"});
  CHECK(matrix.values[0][1] == 1.0);
}

TEST_CASE("trace set has exactly epochs x tasks x 2 unique records") {
  const auto specs = cluster_specs(2, 2, 30, 0.1, 99);
  const auto datasets = generate_synthetic_tasks(specs);
  TrainConfig config;
  config.epochs = 4;
  config.batch_size = 16;
  config.learning_rate = 0.1;
  config.hidden_dim = 6;
  config.seed = 3;
  const auto result = train_and_capture(datasets, config);
  CHECK(result.traces.size() == 4u * 4u * 2u);

  std::set<std::tuple<TaskLabel, int, std::string>> keys;
  for (const auto& trace : result.traces) {
    CHECK(keys.insert({trace.task, trace.epoch, trace.layer}).second);
  }
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  const auto specs = cluster_specs(2, 2, 40, 0.1, 123);
  const auto datasets = generate_synthetic_tasks(specs);
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 8;
  config.learning_rate = 0.15;
  config.hidden_dim = 7;
  config.seed = 1000;
  const auto a = train_and_capture(datasets, config);
  const auto b = train_and_capture(datasets, config);
  REQUIRE(a.traces.size() == b.traces.size());
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    CHECK(a.traces[i].vector == b.traces[i].vector);
  }
  CHECK(a.params.encoder_weight == b.params.encoder_weight);
  CHECK(a.params.classifier_weight == b.params.classifier_weight);
}

TEST_CASE("full-batch loss decreases on separable data") {
  const auto specs = cluster_specs(1, 1, 120, 0.0, 31);
  const auto datasets = generate_synthetic_tasks(specs);
  TrainConfig config;
  config.epochs = 100;
  config.batch_size = 120;  // full batch: one step per epoch
  config.learning_rate = 0.5;
  config.hidden_dim = 12;
  config.seed = 6;
  const auto result = train_and_capture(datasets, config);

  int increases = 0;
  for (std::size_t e = 1; e < result.epoch_task_loss.size(); ++e) {
    if (result.epoch_task_loss[e][0] > result.epoch_task_loss[e - 1][0]) ++increases;
  }
  CHECK(increases <= 5);  // <= 5% non-monotone steps
  CHECK(result.epoch_task_loss.back()[0] < result.epoch_task_loss.front()[0]);
}

TEST_CASE("planted clusters separate in classifier-layer similarity") {
  // observed pass rate at these settings: 100/100 (threshold 95)
  int pass = 0;
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto specs = cluster_specs(3, 2, 200, 0.1, 10'000 + seed);
    const auto datasets = generate_synthetic_tasks(specs);
    TrainConfig config;
    config.epochs = 10;
    config.batch_size = 50;
    config.learning_rate = 0.3;
    config.hidden_dim = 16;
    config.seed = 20'000 + seed;
    const auto result = train_and_capture(datasets, config);
    std::vector<TaskLabel> tasks;
    for (const auto& data : datasets) tasks.push_back(data.task);
    const auto matrix = epoch_similarity_average(result.traces, kClassifierLayer, tasks);

    double min_intra = 1.0, max_inter = -1.0;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = i + 1; j < 6; ++j) {
        const bool same = tasks[i][0] == tasks[j][0];  // cluster letter prefix
        if (same) min_intra = std::min(min_intra, matrix.values[i][j]);
        else max_inter = std::max(max_inter, matrix.values[i][j]);
      }
    }
    if (min_intra > max_inter) ++pass;
  }
  CHECK(pass >= 95);
}

TEST_CASE("uniform subsampling keeps order and size") {
  const auto data = random_dataset("t", 3, 3, 100, 5);
  const auto sub = subsample_uniform(data, 0.25, 42);
  CHECK(sub.size() == 25);
  CHECK(subsample_uniform(data, 1.0, 42).size() == 100);
  const auto again = subsample_uniform(data, 0.25, 42);
  CHECK(sub.features == again.features);
  CHECK(sub.labels == again.labels);
  try {
    subsample_uniform(data, 0.0, 1);
    FAIL("expected InvalidConfig");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::InvalidConfig);
  }
}
