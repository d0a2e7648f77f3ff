#include "taskgroup/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "taskgroup/rng.hpp"

namespace taskgroup {

namespace {

void check_positive(long long value, const char* name) {
  if (value <= 0) {
    throw Error(ErrorCode::InvalidConfig,
                std::string(name) + " must be positive, got " + std::to_string(value));
  }
}

/// Cluster concept directions: m orthonormalized Gaussian vectors mixed
/// into a simplex-like frame, so pairwise cosines are -1/(m-1) (0 never
/// occurs for m >= 2; a single cluster is unconstrained).
std::map<int, std::vector<double>> build_concepts(const std::vector<SyntheticTaskSpec>& specs) {
  const std::size_t dim = static_cast<std::size_t>(specs.front().input_dim) *
                          static_cast<std::size_t>(specs.front().n_classes);

  // Clusters in order of first appearance; the concept RNG is derived from
  // the first member's seed so different run seeds plant different concepts.
  std::vector<int> cluster_ids;
  std::map<int, std::uint64_t> first_seed;
  for (const auto& spec : specs) {
    if (!first_seed.count(spec.cluster_id)) {
      first_seed[spec.cluster_id] = spec.seed;
      cluster_ids.push_back(spec.cluster_id);
    }
  }
  const std::size_t m = cluster_ids.size();
  if (m > dim) {
    throw Error(ErrorCode::InconsistentDims,
                "cannot plant " + std::to_string(m) +
                    " mutually non-positive concepts in dimension " +
                    std::to_string(dim));
  }

  // Gram-Schmidt over per-cluster Gaussian draws.
  std::vector<std::vector<double>> basis;
  basis.reserve(m);
  for (int cluster : cluster_ids) {
    GaussianSampler sampler(mix_seed(first_seed.at(cluster),
                                     0xC1A5ULL + static_cast<std::uint64_t>(cluster)));
    std::vector<double> v(dim);
    for (auto& x : v) x = sampler.next();
    for (const auto& u : basis) {
      const double proj = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * u[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-9) {
      throw Error(ErrorCode::InconsistentDims, "degenerate concept draw");
    }
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }

  std::map<int, std::vector<double>> concepts;
  if (m == 1) {
    concepts[cluster_ids[0]] = basis[0];
    return concepts;
  }
  const double beta = 1.0 / static_cast<double>(m - 1);
  for (std::size_t c = 0; c < m; ++c) {
    std::vector<double> concept_vec(dim, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double w = (j == c) ? 1.0 : -beta;
      for (std::size_t i = 0; i < dim; ++i) concept_vec[i] += w * basis[j][i];
    }
    concepts[cluster_ids[c]] = std::move(concept_vec);
  }
  return concepts;
}

struct Activations {
  std::vector<double> hidden;   // H
  std::vector<double> probs;    // C
  double loss = 0.0;
};

void forward_example(const ModelParams& p, std::span<const double> x, int label,
                     Activations& act) {
  const int in = p.input_dim, hid = p.hidden_dim, out = p.n_classes;
  act.hidden.assign(static_cast<std::size_t>(hid), 0.0);
  for (int j = 0; j < hid; ++j) {
    double a = p.encoder_bias[static_cast<std::size_t>(j)];
    for (int i = 0; i < in; ++i) {
      a += x[static_cast<std::size_t>(i)] *
           p.encoder_weight[static_cast<std::size_t>(i) * hid + j];
    }
    act.hidden[static_cast<std::size_t>(j)] = std::tanh(a);
  }
  std::vector<double>& z = act.probs;
  z.assign(static_cast<std::size_t>(out), 0.0);
  for (int c = 0; c < out; ++c) {
    double v = p.classifier_bias[static_cast<std::size_t>(c)];
    for (int j = 0; j < hid; ++j) {
      v += act.hidden[static_cast<std::size_t>(j)] *
           p.classifier_weight[static_cast<std::size_t>(j) * out + c];
    }
    z[static_cast<std::size_t>(c)] = v;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  const double logit_y = std::log(z[static_cast<std::size_t>(label)] / sum);
  for (auto& v : z) v /= sum;
  act.loss = -logit_y;
}

void check_batch(const ModelParams& params, const Batch& batch) {
  if (batch.size() == 0) {
    throw Error(ErrorCode::EmptyDataset, "empty batch");
  }
  if (batch.input_dim != params.input_dim || batch.n_classes != params.n_classes) {
    throw Error(ErrorCode::InconsistentDims, "batch shape does not match model");
  }
  if (batch.features.size() != batch.size() * static_cast<std::size_t>(batch.input_dim)) {
    throw Error(ErrorCode::InconsistentDims, "feature buffer size mismatch");
  }
  for (int y : batch.labels) {
    if (y < 0 || y >= batch.n_classes) {
      throw Error(ErrorCode::InconsistentDims, "label out of range");
    }
  }
}

void apply_update(ModelParams& params, const LayerGrads& grads, double lr) {
  const std::size_t ew = params.encoder_weight.size();
  const std::size_t eb = params.encoder_bias.size();
  const std::size_t cw = params.classifier_weight.size();
  for (std::size_t i = 0; i < ew; ++i) params.encoder_weight[i] -= lr * grads.encoder[i];
  for (std::size_t i = 0; i < eb; ++i) params.encoder_bias[i] -= lr * grads.encoder[ew + i];
  for (std::size_t i = 0; i < cw; ++i) params.classifier_weight[i] -= lr * grads.classifier[i];
  for (std::size_t i = 0; i < params.classifier_bias.size(); ++i) {
    params.classifier_bias[i] -= lr * grads.classifier[cw + i];
  }
}

}  // namespace

Batch full_batch(const Dataset& dataset) {
  return slice_batch(dataset, 0, dataset.size());
}

Batch slice_batch(const Dataset& dataset, std::size_t begin, std::size_t count) {
  Batch batch;
  batch.input_dim = dataset.input_dim;
  batch.n_classes = dataset.n_classes;
  batch.features = {dataset.features.data() + begin * static_cast<std::size_t>(dataset.input_dim),
                    count * static_cast<std::size_t>(dataset.input_dim)};
  batch.labels = {dataset.labels.data() + begin, count};
  return batch;
}

ModelParams init_params(int input_dim, int hidden_dim, int n_classes, std::uint64_t seed) {
  check_positive(input_dim, "input_dim");
  check_positive(hidden_dim, "hidden_dim");
  if (n_classes < 2) {
    throw Error(ErrorCode::InvalidConfig, "n_classes must be >= 2");
  }
  ModelParams params;
  params.input_dim = input_dim;
  params.hidden_dim = hidden_dim;
  params.n_classes = n_classes;
  GaussianSampler sampler(mix_seed(seed, 0x1217ULL));
  const double enc_scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double cls_scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  params.encoder_weight.resize(static_cast<std::size_t>(input_dim) * hidden_dim);
  for (auto& w : params.encoder_weight) w = enc_scale * sampler.next();
  params.encoder_bias.assign(static_cast<std::size_t>(hidden_dim), 0.0);
  params.classifier_weight.resize(static_cast<std::size_t>(hidden_dim) * n_classes);
  for (auto& w : params.classifier_weight) w = cls_scale * sampler.next();
  params.classifier_bias.assign(static_cast<std::size_t>(n_classes), 0.0);
  return params;
}

std::vector<Dataset> generate_synthetic_tasks(const std::vector<SyntheticTaskSpec>& specs) {
  if (specs.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no task specs");
  }
  const int input_dim = specs.front().input_dim;
  const int n_classes = specs.front().n_classes;
  for (const auto& spec : specs) {
    if (spec.input_dim != input_dim || spec.n_classes != n_classes) {
      throw Error(ErrorCode::InconsistentDims,
                  "task '" + spec.task + "' disagrees on input_dim/n_classes");
    }
    check_positive(spec.n_train, "n_train");
    check_positive(spec.input_dim, "input_dim");
    if (spec.n_classes < 2) {
      throw Error(ErrorCode::InvalidConfig, "n_classes must be >= 2");
    }
    if (spec.noise_sigma < 0.0) {
      throw Error(ErrorCode::InvalidConfig, "noise_sigma must be >= 0");
    }
  }

  const auto concepts = build_concepts(specs);

  std::vector<Dataset> datasets;
  datasets.reserve(specs.size());
  for (const auto& spec : specs) {
    const auto& concept_vec = concepts.at(spec.cluster_id);
    Dataset data;
    data.task = spec.task;
    data.input_dim = input_dim;
    data.n_classes = n_classes;
    data.features.reserve(static_cast<std::size_t>(spec.n_train) * input_dim);
    data.labels.reserve(static_cast<std::size_t>(spec.n_train));

    GaussianSampler sampler(mix_seed(spec.seed, 0xDA7AULL));
    std::vector<double> logits(static_cast<std::size_t>(n_classes));
    for (int e = 0; e < spec.n_train; ++e) {
      const std::size_t base = data.features.size();
      for (int i = 0; i < input_dim; ++i) data.features.push_back(sampler.next());
      for (int c = 0; c < n_classes; ++c) {
        double v = 0.0;
        for (int i = 0; i < input_dim; ++i) {
          v += data.features[base + static_cast<std::size_t>(i)] *
               concept_vec[static_cast<std::size_t>(i) * n_classes + c];
        }
        logits[static_cast<std::size_t>(c)] = v;
      }
      if (spec.noise_sigma > 0.0) {
        for (auto& v : logits) v += spec.noise_sigma * sampler.next();
      }
      const auto best = std::max_element(logits.begin(), logits.end());
      data.labels.push_back(static_cast<int>(best - logits.begin()));
    }
    datasets.push_back(std::move(data));
  }
  return datasets;
}

double forward_loss(const ModelParams& params, const Batch& batch) {
  check_batch(params, batch);
  Activations act;
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::span<const double> x{batch.features.data() + b * static_cast<std::size_t>(batch.input_dim),
                              static_cast<std::size_t>(batch.input_dim)};
    forward_example(params, x, batch.labels[b], act);
    total += act.loss;
  }
  return total / static_cast<double>(batch.size());
}

LayerGrads backward_grads(const ModelParams& params, const Batch& batch) {
  check_batch(params, batch);
  const int in = params.input_dim, hid = params.hidden_dim, out = params.n_classes;

  LayerGrads grads;
  grads.encoder.assign(static_cast<std::size_t>(in) * hid + hid, 0.0);
  grads.classifier.assign(static_cast<std::size_t>(hid) * out + out, 0.0);
  double* gew = grads.encoder.data();
  double* geb = grads.encoder.data() + static_cast<std::size_t>(in) * hid;
  double* gcw = grads.classifier.data();
  double* gcb = grads.classifier.data() + static_cast<std::size_t>(hid) * out;

  Activations act;
  std::vector<double> delta(static_cast<std::size_t>(out));
  std::vector<double> dpre(static_cast<std::size_t>(hid));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::span<const double> x{batch.features.data() + b * static_cast<std::size_t>(batch.input_dim),
                              static_cast<std::size_t>(batch.input_dim)};
    forward_example(params, x, batch.labels[b], act);
    for (int c = 0; c < out; ++c) {
      delta[static_cast<std::size_t>(c)] =
          act.probs[static_cast<std::size_t>(c)] - (c == batch.labels[b] ? 1.0 : 0.0);
    }
    for (int c = 0; c < out; ++c) {
      const double d = delta[static_cast<std::size_t>(c)];
      gcb[c] += d;
      for (int j = 0; j < hid; ++j) {
        gcw[static_cast<std::size_t>(j) * out + c] += act.hidden[static_cast<std::size_t>(j)] * d;
      }
    }
    for (int j = 0; j < hid; ++j) {
      double dh = 0.0;
      for (int c = 0; c < out; ++c) {
        dh += params.classifier_weight[static_cast<std::size_t>(j) * out + c] *
              delta[static_cast<std::size_t>(c)];
      }
      const double h = act.hidden[static_cast<std::size_t>(j)];
      dpre[static_cast<std::size_t>(j)] = dh * (1.0 - h * h);
    }
    for (int j = 0; j < hid; ++j) {
      const double d = dpre[static_cast<std::size_t>(j)];
      geb[j] += d;
      for (int i = 0; i < in; ++i) {
        gew[static_cast<std::size_t>(i) * hid + j] += x[static_cast<std::size_t>(i)] * d;
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grads.encoder) g *= inv;
  for (auto& g : grads.classifier) g *= inv;
  return grads;
}

TrainResult train_and_capture(const std::vector<Dataset>& datasets,
                              const TrainConfig& config) {
  if (datasets.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no datasets to train on");
  }
  check_positive(config.epochs, "epochs");
  check_positive(config.batch_size, "batch_size");
  check_positive(config.hidden_dim, "hidden_dim");
  if (config.learning_rate <= 0.0) {
    throw Error(ErrorCode::InvalidConfig, "learning_rate must be positive");
  }
  const int input_dim = datasets.front().input_dim;
  const int n_classes = datasets.front().n_classes;
  for (const auto& data : datasets) {
    if (data.input_dim != input_dim || data.n_classes != n_classes) {
      throw Error(ErrorCode::InconsistentDims,
                  "dataset '" + data.task + "' disagrees on input_dim/n_classes");
    }
    if (data.size() == 0) {
      throw Error(ErrorCode::EmptyDataset, "dataset '" + data.task + "' is empty");
    }
  }

  TrainResult result;
  result.params = init_params(input_dim, config.hidden_dim, n_classes, config.seed);

  const std::size_t n_tasks = datasets.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> n_batches(n_tasks);
  std::size_t rounds = 0;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    n_batches[t] = (datasets[t].size() + bs - 1) / bs;
    rounds = std::max(rounds, n_batches[t]);
  }

  const std::size_t enc_len = result.params.encoder_weight.size() + result.params.encoder_bias.size();
  const std::size_t cls_len =
      result.params.classifier_weight.size() + result.params.classifier_bias.size();

  result.epoch_task_loss.assign(static_cast<std::size_t>(config.epochs),
                                std::vector<double>(n_tasks, 0.0));

  std::vector<LayerGrads> round_grads(n_tasks);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::vector<double>> enc_sum(n_tasks, std::vector<double>(enc_len, 0.0));
    std::vector<std::vector<double>> cls_sum(n_tasks, std::vector<double>(cls_len, 0.0));
    std::vector<std::size_t> steps(n_tasks, 0);

    for (std::size_t round = 0; round < rounds; ++round) {
      // Gradients for every task's batch at the round-start parameters,
      // then the updates; this keeps the per-round gradients of different
      // tasks comparable.
      std::vector<bool> active(n_tasks, false);
      for (std::size_t t = 0; t < n_tasks; ++t) {
        if (round >= n_batches[t]) continue;
        active[t] = true;
        const std::size_t begin = round * bs;
        const std::size_t count = std::min(bs, datasets[t].size() - begin);
        const Batch batch = slice_batch(datasets[t], begin, count);
        result.epoch_task_loss[static_cast<std::size_t>(epoch)][t] +=
            forward_loss(result.params, batch);
        round_grads[t] = backward_grads(result.params, batch);
      }
      for (std::size_t t = 0; t < n_tasks; ++t) {
        if (!active[t]) continue;
        for (std::size_t i = 0; i < enc_len; ++i) enc_sum[t][i] += round_grads[t].encoder[i];
        for (std::size_t i = 0; i < cls_len; ++i) cls_sum[t][i] += round_grads[t].classifier[i];
        ++steps[t];
        apply_update(result.params, round_grads[t], config.learning_rate);
      }
    }

    for (std::size_t t = 0; t < n_tasks; ++t) {
      const double inv = 1.0 / static_cast<double>(steps[t]);
      result.epoch_task_loss[static_cast<std::size_t>(epoch)][t] *= inv;
      GradientTrace enc;
      enc.task = datasets[t].task;
      enc.epoch = epoch;
      enc.layer = kEncoderLayer;
      enc.vector.resize(enc_len);
      for (std::size_t i = 0; i < enc_len; ++i) enc.vector[i] = enc_sum[t][i] * inv;
      GradientTrace cls;
      cls.task = datasets[t].task;
      cls.epoch = epoch;
      cls.layer = kClassifierLayer;
      cls.vector.resize(cls_len);
      for (std::size_t i = 0; i < cls_len; ++i) cls.vector[i] = cls_sum[t][i] * inv;
      result.traces.push_back(std::move(enc));
      result.traces.push_back(std::move(cls));
    }
  }
  return result;
}

double evaluate_accuracy(const ModelParams& params, const Dataset& dataset) {
  if (dataset.size() == 0) {
    throw Error(ErrorCode::EmptyDataset, "empty evaluation dataset");
  }
  Activations act;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    forward_example(params, dataset.example(i), dataset.labels[i], act);
    const auto best = std::max_element(act.probs.begin(), act.probs.end());
    if (static_cast<int>(best - act.probs.begin()) == dataset.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

Dataset subsample_uniform(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "subsample fraction must be in (0, 1]");
  }
  if (fraction == 1.0) return dataset;
  const std::size_t n = dataset.size();
  const std::size_t keep =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));

  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0x5ABULL));
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(keep);
  std::sort(indices.begin(), indices.end());

  Dataset out;
  out.task = dataset.task;
  out.input_dim = dataset.input_dim;
  out.n_classes = dataset.n_classes;
  out.features.reserve(keep * static_cast<std::size_t>(dataset.input_dim));
  out.labels.reserve(keep);
  for (std::size_t i : indices) {
    const auto x = dataset.example(i);
    out.features.insert(out.features.end(), x.begin(), x.end());
    out.labels.push_back(dataset.labels[i]);
  }
  return out;
}

}  // namespace taskgroup
