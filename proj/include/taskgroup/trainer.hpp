#ifndef TASKGROUP_TRAINER_HPP
#define TASKGROUP_TRAINER_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taskgroup/similarity.hpp"

namespace taskgroup {

inline constexpr const char* kEncoderLayer = "encoder";
inline constexpr const char* kClassifierLayer = "classifier";

/// One synthetic task. Tasks sharing cluster_id draw labels from the same
/// planted linear concept; concepts of distinct clusters have pairwise
/// non-positive cosine between their flattened weight matrices.
struct SyntheticTaskSpec {
  TaskLabel task;
  int cluster_id = 0;
  int n_train = 0;
  int input_dim = 0;
  int n_classes = 0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct TrainConfig {
  int epochs = 1;
  int batch_size = 32;
  double learning_rate = 0.1;
  int hidden_dim = 16;
  std::uint64_t seed = 0;
};

struct Dataset {
  TaskLabel task;
  int input_dim = 0;
  int n_classes = 0;
  std::vector<double> features;  // n x input_dim, row-major
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> example(std::size_t i) const {
    return {features.data() + i * static_cast<std::size_t>(input_dim),
            static_cast<std::size_t>(input_dim)};
  }
};

/// A contiguous slice of a dataset.
struct Batch {
  std::span<const double> features;  // count x input_dim, row-major
  std::span<const int> labels;
  int input_dim = 0;
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
};

Batch full_batch(const Dataset& dataset);
Batch slice_batch(const Dataset& dataset, std::size_t begin, std::size_t count);

/// tanh hidden layer + softmax head. Weight matrices are row-major.
struct ModelParams {
  int input_dim = 0;
  int hidden_dim = 0;
  int n_classes = 0;
  std::vector<double> encoder_weight;     // input_dim x hidden_dim
  std::vector<double> encoder_bias;       // hidden_dim
  std::vector<double> classifier_weight;  // hidden_dim x n_classes
  std::vector<double> classifier_bias;    // n_classes
};

ModelParams init_params(int input_dim, int hidden_dim, int n_classes, std::uint64_t seed);

/// Per-layer gradients, flattened as row-major weights followed by bias.
struct LayerGrads {
  std::vector<double> encoder;     // input_dim*hidden_dim + hidden_dim
  std::vector<double> classifier;  // hidden_dim*n_classes + n_classes
};

/// Deterministic synthetic datasets: Gaussian features, labels from the
/// planted cluster concept with Gaussian logit noise of scale noise_sigma.
std::vector<Dataset> generate_synthetic_tasks(const std::vector<SyntheticTaskSpec>& specs);

/// Mean softmax cross-entropy over the batch.
double forward_loss(const ModelParams& params, const Batch& batch);

/// Analytic gradients of forward_loss.
LayerGrads backward_grads(const ModelParams& params, const Batch& batch);

struct TrainResult {
  std::vector<GradientTrace> traces;
  ModelParams params;
  std::vector<std::vector<double>> epoch_task_loss;  // [epoch][task]
};

/// Joint training over all tasks with plain SGD. Each round takes the next
/// mini-batch of every task, evaluates all gradients at the round-start
/// parameters, applies the updates, and accumulates per-task traces. Emits
/// one trace per (task, epoch, layer) holding the unweighted mean of that
/// task's step gradients within the epoch.
TrainResult train_and_capture(const std::vector<Dataset>& datasets,
                              const TrainConfig& config);

double evaluate_accuracy(const ModelParams& params, const Dataset& dataset);

/// Uniform subsample without replacement, keeping original example order.
/// Keeps max(1, round(fraction * n)) examples.
Dataset subsample_uniform(const Dataset& dataset, double fraction, std::uint64_t seed);

}  // namespace taskgroup

#endif  // TASKGROUP_TRAINER_HPP
