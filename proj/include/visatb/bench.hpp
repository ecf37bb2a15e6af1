// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "core.hpp"
#include "loss.hpp"
#include "measure.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "table.hpp"
#include "weights.hpp"

namespace visatb {

/// Metric every synthetic task is scored on.
inline constexpr const char* kBenchMetric = "token_score";

// ---------------------------------------------------------------------------
// Synthetic task configuration
// ---------------------------------------------------------------------------

/// One synthetic task. Sequence lengths vary per sample (token-count
/// imbalance is what separates token-level from task-level averaging);
/// noise_level drives how much data the task needs to plateau.
struct SyntheticTaskConfig {
  std::string id;
  std::size_t min_seq_len = 4;
  std::size_t max_seq_len = 12;
  double noise_level = 0.5;  ///< in [0, 1]; mapped onto [sigma_min, sigma_max]
  std::size_t samples = 1000;
  std::size_t classes = 3;
};

/// Symmetric knowledge overlap between two tasks, in [0, 1]. Pairs not
/// listed share nothing.
struct PairOverlap {
  std::string a;
  std::string b;
  double overlap = 0.0;
};

/// The whole synthetic suite: tasks, pairwise overlaps, and the noise scale
/// range that noise_level interpolates over.
struct SyntheticSuiteConfig {
  std::vector<SyntheticTaskConfig> tasks;
  std::vector<PairOverlap> overlaps;
  double sigma_min = 0.35;
  double sigma_max = 1.0;
  /// Distractor dimensions carrying pure noise. Identifying the signal
  /// subspace among them is what keeps representation quality improving
  /// with training-data volume — the channel cross-task contribution
  /// flows through.
  std::size_t noise_dims = 8;
  /// How many dimensions each shared (pair) class direction is spread
  /// over. Spreading lowers the per-dimension signal-to-noise ratio of
  /// exactly the shared structure, so extracting it takes large-data
  /// volume: mini subsets keep private structure alive while the shared
  /// payoff scales with how much related data a run actually contains.
  std::size_t shared_spread = 12;
};

/// One sample: per-token class labels and the concatenated per-token feature
/// vectors (labels.size() * feature_dim doubles).
struct Sample {
  std::vector<int> labels;
  std::vector<double> features;
};

/// Generated data of one task, split 20% validation / 20% test / 60%
/// training pool. Validation and test are held out before any subset
/// sampling.
struct TaskDataset {
  std::string task_id;
  std::size_t classes = 0;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

struct SyntheticSuite {
  std::size_t feature_dim = 0;
  std::vector<TaskDataset> tasks;

  const TaskDataset& dataset(std::string_view task_id) const {
    for (const TaskDataset& t : tasks)
      if (t.task_id == task_id) return t;
    raise(Errc::UnknownTask, "no dataset for task \"" + std::string(task_id) + "\"");
  }
};

namespace detail {

inline void validate_suite_config(const SyntheticSuiteConfig& cfg) {
  if (cfg.tasks.empty()) raise(Errc::InvalidConfig, "synthetic suite has no tasks");
  if (cfg.shared_spread < 1) raise(Errc::InvalidConfig, "shared_spread must be >= 1");
  if (!(cfg.sigma_min >= 0.0 && cfg.sigma_min <= cfg.sigma_max && std::isfinite(cfg.sigma_max)))
    raise(Errc::InvalidConfig, "need 0 <= sigma_min <= sigma_max");
  std::map<std::string_view, const SyntheticTaskConfig*> by_id;
  for (const SyntheticTaskConfig& t : cfg.tasks) {
    if (t.id.empty()) raise(Errc::InvalidConfig, "synthetic task with empty id");
    if (!by_id.emplace(t.id, &t).second)
      raise(Errc::InvalidConfig, "duplicate synthetic task id \"" + t.id + "\"");
    if (t.min_seq_len < 1 || t.min_seq_len > t.max_seq_len)
      raise(Errc::InvalidConfig, "task \"" + t.id + "\": need 1 <= min_seq_len <= max_seq_len");
    if (t.samples < 1) raise(Errc::InvalidConfig, "task \"" + t.id + "\": samples must be >= 1");
    if (t.classes < 2) raise(Errc::InvalidConfig, "task \"" + t.id + "\": classes must be >= 2");
    if (!(t.noise_level >= 0.0 && t.noise_level <= 1.0))
      raise(Errc::InvalidConfig, "task \"" + t.id + "\": noise_level must lie in [0, 1]");
  }
  std::map<std::pair<std::string_view, std::string_view>, int> seen;
  for (const PairOverlap& p : cfg.overlaps) {
    auto a = by_id.find(p.a), b = by_id.find(p.b);
    if (a == by_id.end() || b == by_id.end())
      raise(Errc::InvalidConfig, "overlap references unknown task (" + p.a + ", " + p.b + ")");
    if (p.a == p.b) raise(Errc::InvalidConfig, "overlap of task \"" + p.a + "\" with itself");
    if (!(p.overlap >= 0.0 && p.overlap <= 1.0))
      raise(Errc::InvalidConfig, "overlap (" + p.a + ", " + p.b + ") must lie in [0, 1]");
    if (a->second->classes != b->second->classes)
      raise(Errc::InvalidConfig, "overlapping tasks (" + p.a + ", " + p.b +
                                     ") must have the same class count");
    auto key = p.a < p.b ? std::pair(std::string_view(p.a), std::string_view(p.b))
                         : std::pair(std::string_view(p.b), std::string_view(p.a));
    if (++seen[key] > 1)
      raise(Errc::InvalidConfig, "overlap (" + p.a + ", " + p.b + ") listed twice");
  }
}

}  // namespace detail

/// Generates the synthetic datasets. Class prototypes are built from
/// orthogonal blocks: each task owns a private block and each overlapping
/// pair shares one, with the shared component scaled by sqrt(overlap). Token
/// features are the class prototype plus isotropic Gaussian noise whose
/// scale interpolates [sigma_min, sigma_max] by noise_level — so overlap
/// creates measurable cross-task contribution and noise creates measurable
/// difficulty, without hard-coding either quantity.
inline SyntheticSuite generate_tasks(const SyntheticSuiteConfig& cfg, std::uint64_t seed) {
  detail::validate_suite_config(cfg);
  const std::size_t n = cfg.tasks.size();

  // Block layout: one private block per task, one block per listed pair.
  std::vector<std::size_t> private_offset(n);
  std::size_t dim = 0;
  std::map<std::string_view, std::size_t> task_index;
  for (std::size_t i = 0; i < n; ++i) {
    task_index.emplace(cfg.tasks[i].id, i);
    private_offset[i] = dim;
    dim += cfg.tasks[i].classes;
  }
  struct PairBlock {
    std::size_t a, b;
    double overlap;
    std::size_t offset;
  };
  std::vector<PairBlock> pair_blocks;
  for (const PairOverlap& p : cfg.overlaps) {
    PairBlock blk{task_index.at(p.a), task_index.at(p.b), p.overlap, dim};
    dim += cfg.tasks[blk.a].classes * cfg.shared_spread;
    pair_blocks.push_back(blk);
  }
  dim += cfg.noise_dims;  // trailing distractor coordinates, zero in every prototype

  // Class prototypes, unit-normalized.
  std::vector<std::vector<std::vector<double>>> proto(n);  // [task][class][dim]
  for (std::size_t i = 0; i < n; ++i) {
    double overlap_sum = 0.0;
    for (const PairBlock& blk : pair_blocks)
      if (blk.a == i || blk.b == i) overlap_sum += blk.overlap;
    const double beta = std::sqrt(std::max(0.0, 1.0 - overlap_sum));
    proto[i].assign(cfg.tasks[i].classes, std::vector<double>(dim, 0.0));
    for (std::size_t c = 0; c < cfg.tasks[i].classes; ++c) {
      std::vector<double>& mu = proto[i][c];
      mu[private_offset[i] + c] = beta;
      for (const PairBlock& blk : pair_blocks)
        if (blk.a == i || blk.b == i) {
          const double amp =
              std::sqrt(blk.overlap / static_cast<double>(cfg.shared_spread));
          for (std::size_t sp = 0; sp < cfg.shared_spread; ++sp)
            mu[blk.offset + sp * cfg.tasks[i].classes + c] = amp;
        }
      double norm = 0.0;
      for (double v : mu) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (double& v : mu) v /= norm;
    }
  }

  const Rng root(seed);
  SyntheticSuite suite;
  suite.feature_dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    const SyntheticTaskConfig& tc = cfg.tasks[i];
    Rng rng = root.fork("task:" + tc.id);
    const double sigma = cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * tc.noise_level;

    std::vector<Sample> all;
    all.reserve(tc.samples);
    for (std::size_t s = 0; s < tc.samples; ++s) {
      const std::size_t len =
          tc.min_seq_len + rng.uniform_int(tc.max_seq_len - tc.min_seq_len + 1);
      Sample sample;
      sample.labels.reserve(len);
      sample.features.reserve(len * dim);
      for (std::size_t t = 0; t < len; ++t) {
        const int label = static_cast<int>(rng.uniform_int(tc.classes));
        sample.labels.push_back(label);
        const std::vector<double>& mu = proto[i][static_cast<std::size_t>(label)];
        for (std::size_t k = 0; k < dim; ++k)
          sample.features.push_back(mu[k] + sigma * rng.normal());
      }
      all.push_back(std::move(sample));
    }

    // Shuffle, then carve out validation and test before anything samples
    // training subsets.
    Rng split_rng = root.fork("split:" + tc.id);
    std::vector<std::size_t> order(all.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    for (std::size_t k = order.size(); k > 1; --k)
      std::swap(order[k - 1], order[split_rng.uniform_int(k)]);

    TaskDataset ds;
    ds.task_id = tc.id;
    ds.classes = tc.classes;
    const std::size_t n_val = all.size() / 5;
    const std::size_t n_test = all.size() / 5;
    for (std::size_t k = 0; k < order.size(); ++k) {
      Sample& s = all[order[k]];
      if (k < n_val)
        ds.val.push_back(std::move(s));
      else if (k < n_val + n_test)
        ds.test.push_back(std::move(s));
      else
        ds.train.push_back(std::move(s));
    }
    suite.tasks.push_back(std::move(ds));
  }
  return suite;
}

/// Task graph describing a synthetic suite: per-task balancing, training-pool
/// sizes as dataset sizes, one accuracy metric per task.
inline TaskGraph graph_for(const SyntheticSuite& suite) {
  TaskGraph graph;
  graph.grouping_mode = GroupingMode::PerTask;
  for (const TaskDataset& t : suite.tasks) {
    TaskSpec spec;
    spec.id = t.task_id;
    spec.dataset_size = t.train.size();
    spec.metrics = {{kBenchMetric, MetricDirection::HigherIsBetter}};
    graph.tasks.push_back(std::move(spec));
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Subset sampling and run planning
// ---------------------------------------------------------------------------

/// Gradient-descent budget of one training phase.
struct TrainConfig {
  std::size_t steps = 400;
  double learning_rate = 0.5;
  std::size_t batch_size = 32;
  double dwa_temperature = 2.0;  ///< used by the DWA arm only
  /// Polyak averaging: the returned parameters are the mean over the final
  /// `average_tail` steps (0 disables). Averaging the tail of the SGD path
  /// removes most batch-sampling noise from the measured validation scores,
  /// which is what makes small contribution/difficulty signals resolvable.
  std::size_t average_tail = 0;
};

/// Preparation-stage plan: shared sampling rates (identical across tasks by
/// construction), the per-run training budget, and the seed all run-level
/// randomness derives from.
struct RunPlan {
  double r_large = 0.25;
  double r_mini = 1.0 / 32.0;
  TrainConfig train;
  std::uint64_t seed = 0;
  /// Desk-scale floor on mini-subset size (samples). Large-scale guidance
  /// asks for four-digit mini subsets; at toy scale a fixed floor keeps the
  /// mini runs trainable.
  std::size_t mini_floor = 50;
  bool parallel = false;  ///< run preparation trainings on threads
};

inline void validate_plan(const RunPlan& plan) {
  if (!(plan.r_mini > 0.0 && plan.r_mini <= plan.r_large && plan.r_large <= 1.0))
    raise(Errc::InvalidRate, "need 0 < r_mini <= r_large <= 1");
  if (plan.train.batch_size < 1) raise(Errc::InvalidConfig, "batch_size must be >= 1");
  if (!(std::isfinite(plan.train.learning_rate) && plan.train.learning_rate > 0.0))
    raise(Errc::InvalidConfig, "learning_rate must be finite and positive");
}

/// Randomly samples the nested (large, mini) subsets of one dataset:
/// mini ⊆ large ⊆ dataset, |large| = round(r_large·S), |mini| =
/// round(r_mini·S) raised to the floor and capped at |large|. Returns sorted
/// index vectors.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> sample_subsets(
    std::size_t dataset_size, double r_large, double r_mini, Rng& rng,
    std::size_t mini_floor = 1) {
  if (!(r_mini > 0.0 && r_mini <= r_large && r_large <= 1.0))
    raise(Errc::InvalidRate, "need 0 < r_mini <= r_large <= 1");
  const auto n_large =
      static_cast<std::size_t>(std::llround(r_large * static_cast<double>(dataset_size)));
  if (n_large == 0)
    raise(Errc::EmptySubset, "large subset rounds to zero samples (dataset size " +
                                 std::to_string(dataset_size) + ")");
  auto n_mini =
      static_cast<std::size_t>(std::llround(r_mini * static_cast<double>(dataset_size)));
  n_mini = std::min(std::max(n_mini, std::max<std::size_t>(mini_floor, 1)), n_large);

  std::vector<std::size_t> order(dataset_size);
  for (std::size_t k = 0; k < dataset_size; ++k) order[k] = k;
  for (std::size_t k = dataset_size; k > 1; --k)
    std::swap(order[k - 1], order[rng.uniform_int(k)]);

  std::vector<std::size_t> large(order.begin(), order.begin() + static_cast<long>(n_large));
  std::vector<std::size_t> mini(order.begin(), order.begin() + static_cast<long>(n_mini));
  std::sort(large.begin(), large.end());
  std::sort(mini.begin(), mini.end());
  return {std::move(large), std::move(mini)};
}

/// Estimated preparation cost as a multiple of the final training run:
/// one large-subset pass per unit amortized plus the joint mini run,
///   r_large + N · r_mini.
inline double cost_estimate(std::size_t n_units, double r_large, double r_mini) {
  if (!(std::isfinite(r_large) && r_large > 0.0 && r_large <= 1.0))
    raise(Errc::InvalidRate, "r_large must lie in (0, 1]");
  if (!(std::isfinite(r_mini) && r_mini >= 0.0 && r_mini <= r_large))
    raise(Errc::InvalidRate, "r_mini must lie in [0, r_large]");
  return r_large + static_cast<double>(n_units) * r_mini;
}

// ---------------------------------------------------------------------------
// Toy model
// ---------------------------------------------------------------------------

/// Smallest model that can exhibit cross-task transfer and interference: a
/// shared linear feature map plus one linear softmax head per task, trained
/// with plain gradient descent on per-token cross-entropy.
class ToyModel {
 public:
  struct Head {
    std::size_t classes = 0;
    std::vector<double> w;  ///< classes × hidden, row-major
  };

  ToyModel(std::size_t input_dim, std::size_t hidden_dim,
           const std::vector<std::pair<std::string, std::size_t>>& head_specs, Rng& rng)
      : input_dim_(input_dim), hidden_dim_(hidden_dim) {
    if (input_dim_ < 1 || hidden_dim_ < 1)
      raise(Errc::InvalidConfig, "model dimensions must be positive");
    shared.resize(hidden_dim_ * input_dim_);
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(input_dim_));
    for (double& v : shared) v = w_scale * rng.normal();
    for (const auto& [task, classes] : head_specs) {
      if (classes < 2) raise(Errc::InvalidConfig, "head \"" + task + "\" needs >= 2 classes");
      if (heads.count(task)) raise(Errc::InvalidConfig, "duplicate head \"" + task + "\"");
      heads.emplace(task, Head{classes, std::vector<double>(classes * hidden_dim_)});
    }
    const double h_scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim_));
    for (auto& [task, head] : heads)
      for (double& v : head.w) v = h_scale * rng.normal();
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }

  const Head& head(std::string_view task) const {
    auto it = heads.find(std::string(task));
    if (it == heads.end()) raise(Errc::UnknownTask, "no head for task \"" + std::string(task) + "\"");
    return it->second;
  }

  /// Pointers to every parameter, shared map first then heads in task-id
  /// order; used by generic parameter-space tooling (e.g. finite-difference
  /// checks).
  std::vector<double*> parameter_view() {
    std::vector<double*> view;
    for (double& v : shared) view.push_back(&v);
    for (auto& [task, head] : heads)
      for (double& v : head.w) view.push_back(&v);
    return view;
  }

  std::vector<double> shared;              ///< hidden × input, row-major
  std::map<std::string, Head> heads;       ///< task id → head

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
};

/// Gradient with the same shape as a ToyModel's parameters.
struct ModelGradient {
  std::vector<double> shared;
  std::map<std::string, std::vector<double>> heads;

  explicit ModelGradient(const ToyModel& model) : shared(model.shared.size(), 0.0) {
    for (const auto& [task, head] : model.heads)
      heads.emplace(task, std::vector<double>(head.w.size(), 0.0));
  }

  /// Pointer view aligned with ToyModel::parameter_view().
  std::vector<const double*> parameter_view() const {
    std::vector<const double*> view;
    for (const double& v : shared) view.push_back(&v);
    for (const auto& [task, g] : heads)
      for (const double& v : g) view.push_back(&v);
    return view;
  }
};

// ---------------------------------------------------------------------------
// Forward/backward and evaluation
// ---------------------------------------------------------------------------

/// One batch element: which task's head (and whose unit weight) applies to a
/// sample.
struct BatchItem {
  std::string task;
  std::string unit;
  const Sample* sample = nullptr;
};

/// Computes the task-weighted token-level loss of a batch,
///   Σ_u λ_u · (token loss sum of unit u) / Σ_u λ_u · (token count of u),
/// and optionally its exact gradient (per-token gradients scale by
/// λ_u / Σ λ·count) and the raw per-token losses. This is the one objective
/// every training mode drives; the modes differ only in where λ comes from.
inline double weighted_batch_loss(const ToyModel& model, const std::vector<BatchItem>& batch,
                                  const WeightVector& weights, ModelGradient* grad = nullptr,
                                  TokenLossBatch* token_batch = nullptr) {
  if (batch.empty()) raise(Errc::EmptyBatch, "loss of an empty batch");
  const std::size_t d = model.input_dim();
  const std::size_t h = model.hidden_dim();

  // First pass: per-unit token counts fix the weighted denominator.
  double weighted_tokens = 0.0;
  for (const BatchItem& item : batch)
    weighted_tokens +=
        weights.value_at(item.unit) * static_cast<double>(item.sample->labels.size());
  if (weighted_tokens <= 0.0) raise(Errc::EmptyBatch, "batch carries no tokens");

  double weighted_loss = 0.0;
  std::vector<double> z(h), logits, p, dz(h);
  std::size_t sample_no = 0;
  for (const BatchItem& item : batch) {
    const ToyModel::Head& head = model.head(item.task);
    const double lambda = weights.value_at(item.unit);
    const double scale = lambda / weighted_tokens;
    const Sample& s = *item.sample;
    const std::size_t len = s.labels.size();
    logits.assign(head.classes, 0.0);
    p.assign(head.classes, 0.0);
    std::vector<double> token_losses;
    if (token_batch) token_losses.reserve(len);

    std::vector<double>* gh = nullptr;
    if (grad) gh = &grad->heads.at(item.task);

    for (std::size_t t = 0; t < len; ++t) {
      const double* x = s.features.data() + t * d;
      for (std::size_t r = 0; r < h; ++r) {
        double acc = 0.0;
        const double* wrow = model.shared.data() + r * d;
        for (std::size_t k = 0; k < d; ++k) acc += wrow[k] * x[k];
        z[r] = acc;
      }
      for (std::size_t c = 0; c < head.classes; ++c) {
        double acc = 0.0;
        const double* hrow = head.w.data() + c * h;
        for (std::size_t r = 0; r < h; ++r) acc += hrow[r] * z[r];
        logits[c] = acc;
      }
      const double hi = *std::max_element(logits.begin(), logits.end());
      double lse = 0.0;
      for (std::size_t c = 0; c < head.classes; ++c) lse += std::exp(logits[c] - hi);
      lse = hi + std::log(lse);
      const auto y = static_cast<std::size_t>(s.labels[t]);
      const double token_loss = lse - logits[y];
      weighted_loss += lambda * token_loss;
      if (token_batch) token_losses.push_back(std::max(token_loss, 0.0));

      if (grad) {
        for (std::size_t c = 0; c < head.classes; ++c) p[c] = std::exp(logits[c] - lse);
        p[y] -= 1.0;
        std::fill(dz.begin(), dz.end(), 0.0);
        for (std::size_t c = 0; c < head.classes; ++c) {
          const double g = scale * p[c];
          double* ghrow = gh->data() + c * h;
          const double* hrow = head.w.data() + c * h;
          for (std::size_t r = 0; r < h; ++r) {
            ghrow[r] += g * z[r];
            dz[r] += p[c] * hrow[r];
          }
        }
        for (std::size_t r = 0; r < h; ++r) {
          const double g = scale * dz[r];
          double* gwrow = grad->shared.data() + r * d;
          for (std::size_t k = 0; k < d; ++k) gwrow[k] += g * x[k];
        }
      }
    }
    if (token_batch)
      token_batch->add(item.unit, "s" + std::to_string(sample_no), std::move(token_losses));
    ++sample_no;
  }
  return weighted_loss / weighted_tokens;
}

/// Mean per-token argmax accuracy of `model` on `samples` under `task`'s
/// head.
inline double evaluate_accuracy(const ToyModel& model, std::string_view task,
                                const std::vector<Sample>& samples) {
  const ToyModel::Head& head = model.head(task);
  const std::size_t d = model.input_dim();
  const std::size_t h = model.hidden_dim();
  std::size_t correct = 0, total = 0;
  std::vector<double> z(h);
  for (const Sample& s : samples) {
    for (std::size_t t = 0; t < s.labels.size(); ++t) {
      const double* x = s.features.data() + t * d;
      for (std::size_t r = 0; r < h; ++r) {
        double acc = 0.0;
        const double* wrow = model.shared.data() + r * d;
        for (std::size_t k = 0; k < d; ++k) acc += wrow[k] * x[k];
        z[r] = acc;
      }
      std::size_t best = 0;
      double best_v = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < head.classes; ++c) {
        double acc = 0.0;
        const double* hrow = head.w.data() + c * h;
        for (std::size_t r = 0; r < h; ++r) acc += hrow[r] * z[r];
        if (acc > best_v) {
          best_v = acc;
          best = c;
        }
      }
      correct += best == static_cast<std::size_t>(s.labels[t]) ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) raise(Errc::EmptySubset, "evaluation set for task \"" + std::string(task) +
                                               "\" has no tokens");
  return static_cast<double>(correct) / static_cast<double>(total);
}

/// Smooth benchmark score of `model` on `samples` under `task`'s head:
/// exp(-mean token cross-entropy), in (0, 1] with higher = better. Unlike
/// argmax accuracy it responds continuously to margin changes, so ratios of
/// score differences resolve small transfer effects that thresholded
/// accuracy buries in rounding noise.
inline double evaluate_token_score(const ToyModel& model, std::string_view task,
                                   const std::vector<Sample>& samples) {
  std::vector<BatchItem> batch;
  batch.reserve(samples.size());
  const std::string id(task);
  for (const Sample& s : samples) batch.push_back({id, id, &s});
  return std::exp(-weighted_batch_loss(model, batch, WeightVector::ones({id})));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Loss-aggregation scheme a training run optimizes.
enum class LossMode { Ew, Vitw, Tla, Rlw, Dwa };

inline std::string_view to_string(LossMode m) {
  switch (m) {
    case LossMode::Ew: return "ew";
    case LossMode::Vitw: return "vitw";
    case LossMode::Tla: return "tla";
    case LossMode::Rlw: return "rlw";
    case LossMode::Dwa: return "dwa";
  }
  return "?";
}

/// Training-pool slice of one task: the head it trains, the unit its weight
/// comes from, and the samples it contributes.
struct TaskData {
  std::string task;
  std::string unit;
  std::vector<const Sample*> samples;
};

struct TrainOutcome {
  std::vector<double> trace;  ///< per-step loss under the mode's weighting
};

/// Plain-SGD trainer. Every mode drives the same weighted objective; per
/// step the effective unit weights are: EW — all ones; VITW — the supplied
/// vector; TLA — reciprocal in-batch token counts; RLW — fresh random draws;
/// DWA — softmax of the loss-decline ratio history. EW and VITW-with-ones
/// therefore produce bit-identical trajectories. Deterministic for a given
/// generator; a non-finite loss aborts with the trailing trace in the error.
inline TrainOutcome train(ToyModel& model, const std::vector<TaskData>& data, LossMode mode,
                          const WeightVector* weights, const TrainConfig& cfg, Rng rng) {
  if (mode == LossMode::Vitw && weights == nullptr)
    raise(Errc::MissingWeight, "VITW training needs a weight vector");

  std::vector<std::string> unit_ids;
  for (const TaskData& td : data) {
    if (td.samples.empty()) continue;
    if (std::find(unit_ids.begin(), unit_ids.end(), td.unit) == unit_ids.end())
      unit_ids.push_back(td.unit);
    if (mode == LossMode::Vitw) weights->value_at(td.unit);  // fail fast on gaps
  }

  std::vector<std::pair<std::size_t, const Sample*>> pool;  // (data index, sample)
  for (std::size_t i = 0; i < data.size(); ++i)
    for (const Sample* s : data[i].samples) pool.emplace_back(i, s);
  if (pool.empty()) raise(Errc::EmptySubset, "training pool is empty");

  DwaState dwa_state;
  dwa_state.temperature = cfg.dwa_temperature;

  const std::size_t tail = std::min(cfg.average_tail, cfg.steps);
  ModelGradient tail_sum(model);  // parameter-shaped accumulator
  std::size_t tail_count = 0;

  TrainOutcome outcome;
  outcome.trace.reserve(cfg.steps);
  std::vector<BatchItem> batch(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::map<std::string, std::size_t> batch_tokens;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto& [di, sample] = pool[rng.uniform_int(pool.size())];
      batch[b] = {data[di].task, data[di].unit, sample};
      batch_tokens[data[di].unit] += sample->labels.size();
    }

    // Effective per-unit weights for this step.
    WeightVector step_weights = WeightVector::ones(unit_ids);
    switch (mode) {
      case LossMode::Ew:
        break;
      case LossMode::Vitw:
        step_weights = *weights;
        break;
      case LossMode::Tla: {
        std::vector<double> inv(unit_ids.size(), 1.0);
        for (std::size_t u = 0; u < unit_ids.size(); ++u) {
          auto it = batch_tokens.find(unit_ids[u]);
          if (it != batch_tokens.end() && it->second > 0)
            inv[u] = 1.0 / static_cast<double>(it->second);
        }
        step_weights = WeightVector(WeightStrategy::Manual, unit_ids, std::move(inv));
        break;
      }
      case LossMode::Rlw:
        step_weights = rlw_weights(rng, unit_ids);
        break;
      case LossMode::Dwa: {
        // Per-unit mean loss of this batch feeds the decline-ratio history;
        // units absent from the batch carry their previous value forward.
        TokenLossBatch probe;
        const double probe_loss =
            weighted_batch_loss(model, batch, WeightVector::ones(unit_ids), nullptr, &probe);
        (void)probe_loss;
        std::map<std::string, double> unit_mean;
        for (const UnitLossTotals& t : per_unit_totals(probe))
          unit_mean[t.unit] = t.loss_sum / static_cast<double>(t.token_count);
        std::vector<double> current(unit_ids.size());
        for (std::size_t u = 0; u < unit_ids.size(); ++u) {
          auto it = unit_mean.find(unit_ids[u]);
          if (it != unit_mean.end() && it->second > 0.0)
            current[u] = it->second;
          else if (dwa_state.prev)
            current[u] = (*dwa_state.prev)[u];
          else
            current[u] = 1.0;
        }
        auto [w, next] = dwa_weights(dwa_state, unit_ids, current);
        step_weights = std::move(w);
        dwa_state = std::move(next);
        break;
      }
    }

    ModelGradient grad(model);
    const double loss = weighted_batch_loss(model, batch, step_weights, &grad);
    if (!std::isfinite(loss)) {
      std::string tail;
      const std::size_t from = outcome.trace.size() > 5 ? outcome.trace.size() - 5 : 0;
      for (std::size_t k = from; k < outcome.trace.size(); ++k)
        tail += (tail.empty() ? "" : ", ") + format_fixed(outcome.trace[k], 6);
      raise(Errc::TrainingDiverged, "non-finite loss at step " + std::to_string(step) +
                                        " (trailing trace: " + tail + ")");
    }
    outcome.trace.push_back(loss);

    for (std::size_t k = 0; k < model.shared.size(); ++k)
      model.shared[k] -= cfg.learning_rate * grad.shared[k];
    for (auto& [task, head] : model.heads) {
      const std::vector<double>& g = grad.heads.at(task);
      for (std::size_t k = 0; k < head.w.size(); ++k)
        head.w[k] -= cfg.learning_rate * g[k];
    }

    if (tail > 0 && step + tail >= cfg.steps) {
      for (std::size_t k = 0; k < model.shared.size(); ++k)
        tail_sum.shared[k] += model.shared[k];
      for (const auto& [task, head] : model.heads) {
        std::vector<double>& acc = tail_sum.heads.at(task);
        for (std::size_t k = 0; k < head.w.size(); ++k) acc[k] += head.w[k];
      }
      ++tail_count;
    }
  }
  if (tail_count > 0) {
    const double inv = 1.0 / static_cast<double>(tail_count);
    for (std::size_t k = 0; k < model.shared.size(); ++k)
      model.shared[k] = tail_sum.shared[k] * inv;
    for (auto& [task, head] : model.heads) {
      const std::vector<double>& acc = tail_sum.heads.at(task);
      for (std::size_t k = 0; k < head.w.size(); ++k) head.w[k] = acc[k] * inv;
    }
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Preparation stage
// ---------------------------------------------------------------------------

namespace detail {

/// Sorted sample-index subsets of one task's training pool.
struct TaskSubsets {
  std::vector<std::size_t> large;
  std::vector<std::size_t> mini;
};

inline std::map<std::string, TaskSubsets> sample_all_subsets(const SyntheticSuite& suite,
                                                             const ValidatedTaskGraph& graph,
                                                             const RunPlan& plan,
                                                             const Rng& root) {
  std::map<std::string, TaskSubsets> subsets;
  for (const TaskSpec& t : graph.tasks()) {
    Rng rng = root.fork("subset:" + t.id);
    auto [large, mini] = sample_subsets(suite.dataset(t.id).train.size(), plan.r_large,
                                        plan.r_mini, rng, plan.mini_floor);
    subsets.emplace(t.id, TaskSubsets{std::move(large), std::move(mini)});
  }
  return subsets;
}

inline std::vector<const Sample*> pick(const std::vector<Sample>& samples,
                                       const std::vector<std::size_t>& idx) {
  std::vector<const Sample*> out;
  out.reserve(idx.size());
  for (std::size_t k : idx) out.push_back(&samples[k]);
  return out;
}

/// Training data for one preparation run: each task's slice depends on the
/// run kind (its unit's large subset, its mini subset, or nothing).
inline std::vector<TaskData> run_pool(const SyntheticSuite& suite,
                                      const ValidatedTaskGraph& graph,
                                      const std::map<std::string, TaskSubsets>& subsets,
                                      const RunId& run) {
  std::vector<TaskData> data;
  for (const TaskSpec& t : graph.tasks()) {
    const std::string& unit = graph.units()[graph.unit_of_task(t.id)].id;
    const bool own_unit = run_kind_has_unit(run.kind) && unit == run.unit;
    const std::vector<Sample>& train = suite.dataset(t.id).train;
    const TaskSubsets& sub = subsets.at(t.id);
    std::vector<const Sample*> samples;
    switch (run.kind) {
      case RunKind::MiniOnly:
        samples = pick(train, sub.mini);
        break;
      case RunKind::TaskPlusMini:
        samples = pick(train, own_unit ? sub.large : sub.mini);
        break;
      case RunKind::TaskOnly:
        if (own_unit) samples = pick(train, sub.large);
        break;
      case RunKind::MiniOfTask:
        if (own_unit) samples = pick(train, sub.mini);
        break;
      case RunKind::Base:
        break;
    }
    if (!samples.empty()) data.push_back({t.id, unit, std::move(samples)});
  }
  return data;
}

}  // namespace detail

/// Executes every required preparation run and fills the validation matrix:
/// for each run, a fresh copy of the shared starting model is trained on the
/// run's data mixture (equal weighting) and scored on every task's
/// validation split. Deterministic: each run's randomness is forked from the
/// plan seed by run label, so parallel and sequential execution produce the
/// same matrix bit for bit.
inline ValidationMatrix run_preparation(const SyntheticSuite& suite,
                                        const ValidatedTaskGraph& graph, const RunPlan& plan,
                                        MeasurementMode mode, std::size_t hidden_dim,
                                        std::vector<std::string>* warnings = nullptr) {
  validate_plan(plan);
  const Rng root(plan.seed);
  if (warnings && plan.train.steps < 100)
    warnings->push_back("preparation budget of " + std::to_string(plan.train.steps) +
                        " steps is below the >=100-step mini-subset guidance");

  const auto subsets = detail::sample_all_subsets(suite, graph, plan, root);

  std::vector<std::pair<std::string, std::size_t>> head_specs;
  for (const TaskSpec& t : graph.tasks())
    head_specs.emplace_back(t.id, suite.dataset(t.id).classes);
  Rng init_rng = root.fork("model_init");
  const ToyModel base_model(suite.feature_dim, hidden_dim, head_specs, init_rng);

  const std::vector<RunId> runs = required_runs(graph, mode);
  std::vector<std::vector<double>> results(runs.size());  // per run, per task accuracy
  std::vector<std::exception_ptr> failures(runs.size());

  auto execute = [&](std::size_t r) {
    try {
      const RunId& run = runs[r];
      ToyModel model = base_model;
      if (run.kind != RunKind::Base) {
        const auto data = detail::run_pool(suite, graph, subsets, run);
        if (data.empty())
          raise(Errc::EmptySubset, "preparation run " + run.label() + " has no training data");
        train(model, data, LossMode::Ew, nullptr, plan.train, root.fork("run:" + run.label()));
      }
      std::vector<double> scores;
      scores.reserve(graph.tasks().size());
      for (const TaskSpec& t : graph.tasks())
        scores.push_back(evaluate_token_score(model, t.id, suite.dataset(t.id).val));
      results[r] = std::move(scores);
    } catch (const Error& e) {
      failures[r] = std::make_exception_ptr(
          Error(e.code(), "preparation run " + runs[r].label() + ": " + e.what()));
    } catch (...) {
      failures[r] = std::current_exception();
    }
  };

  if (plan.parallel) {
    std::vector<std::thread> threads;
    threads.reserve(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) threads.emplace_back(execute, r);
    for (std::thread& t : threads) t.join();
  } else {
    for (std::size_t r = 0; r < runs.size(); ++r) execute(r);
  }
  for (std::size_t r = 0; r < runs.size(); ++r)
    if (failures[r]) std::rethrow_exception(failures[r]);

  ValidationMatrix matrix;
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (std::size_t t = 0; t < graph.tasks().size(); ++t)
      matrix.set(runs[r], graph.tasks()[t].id, kBenchMetric, results[r][t]);
  return matrix;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Everything run_full_pipeline needs; serializable so a benchmark is fully
/// described by one JSON file plus a seed.
struct PipelineConfig {
  SyntheticSuiteConfig suite;
  RunPlan plan;
  TrainConfig final_train{800, 0.5, 32, 2.0};
  std::size_t hidden_dim = 8;
  MeasurementMode mode = MeasurementMode::Standard;
  std::optional<double> temperature;  ///< absent → choose automatically
  std::array<double, 3> alpha = {0.25, 0.25, 0.5};
  std::uint64_t seed = 0;
};

struct PipelineResult {
  std::uint64_t seed;
  std::string config_hash;
  double temperature;
  bool temperature_auto;
  bool temperature_attained;
  double cost;
  ValidationMatrix prep_matrix;
  ContributionMatrix contribution;
  DifficultyVector difficulty;
  WeightVector lambda_out;
  WeightVector lambda_in;
  WeightVector lambda_diff;
  WeightVector lambda_visatb;
  std::vector<MethodDelta> deltas;          ///< vs the per-task baseline
  std::map<std::string, double> final_loss;  ///< per method, last trace entry
  std::vector<std::string> warnings;
};

inline Json to_json(const PipelineConfig& cfg) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  j["mode"] = std::string(to_string(cfg.mode));
  if (cfg.temperature)
    j["temperature"] = *cfg.temperature;
  else
    j["temperature"] = "auto";
  j["alpha"] = cfg.alpha;
  j["hidden_dim"] = cfg.hidden_dim;
  Json plan;
  plan["r_large"] = cfg.plan.r_large;
  plan["r_mini"] = cfg.plan.r_mini;
  plan["steps"] = cfg.plan.train.steps;
  plan["learning_rate"] = cfg.plan.train.learning_rate;
  plan["batch_size"] = cfg.plan.train.batch_size;
  plan["average_tail"] = cfg.plan.train.average_tail;
  plan["mini_floor"] = cfg.plan.mini_floor;
  plan["parallel"] = cfg.plan.parallel;
  j["plan"] = std::move(plan);
  Json fin;
  fin["steps"] = cfg.final_train.steps;
  fin["learning_rate"] = cfg.final_train.learning_rate;
  fin["batch_size"] = cfg.final_train.batch_size;
  fin["average_tail"] = cfg.final_train.average_tail;
  fin["dwa_temperature"] = cfg.final_train.dwa_temperature;
  j["final"] = std::move(fin);
  Json suite;
  suite["sigma_min"] = cfg.suite.sigma_min;
  suite["sigma_max"] = cfg.suite.sigma_max;
  suite["noise_dims"] = cfg.suite.noise_dims;
  suite["shared_spread"] = cfg.suite.shared_spread;
  Json tasks = Json::array();
  for (const SyntheticTaskConfig& t : cfg.suite.tasks) {
    Json jt;
    jt["id"] = t.id;
    jt["min_seq_len"] = t.min_seq_len;
    jt["max_seq_len"] = t.max_seq_len;
    jt["noise_level"] = t.noise_level;
    jt["samples"] = t.samples;
    jt["classes"] = t.classes;
    tasks.push_back(std::move(jt));
  }
  suite["tasks"] = std::move(tasks);
  Json overlaps = Json::array();
  for (const PairOverlap& p : cfg.suite.overlaps) {
    Json jp;
    jp["a"] = p.a;
    jp["b"] = p.b;
    jp["overlap"] = p.overlap;
    overlaps.push_back(std::move(jp));
  }
  suite["overlaps"] = std::move(overlaps);
  j["suite"] = std::move(suite);
  return j;
}

inline PipelineConfig pipeline_config_from_json(const Json& j) {
  detail::require_schema_version(j, "pipeline config");
  PipelineConfig cfg;
  cfg.seed = detail::get_field<std::uint64_t>(j, "seed", "pipeline config");
  cfg.mode =
      measurement_mode_from_string(detail::get_field<std::string>(j, "mode", "pipeline config"));
  auto t = j.find("temperature");
  if (t == j.end()) raise(Errc::SchemaError, "pipeline config: missing temperature");
  if (t->is_string()) {
    if (t->get<std::string>() != "auto")
      raise(Errc::SchemaError, "pipeline config: temperature must be a number or \"auto\"");
  } else {
    cfg.temperature = t->get<double>();
  }
  cfg.alpha = detail::get_field<std::array<double, 3>>(j, "alpha", "pipeline config");
  cfg.hidden_dim = detail::get_field<std::size_t>(j, "hidden_dim", "pipeline config");
  auto plan = j.find("plan");
  if (plan == j.end()) raise(Errc::SchemaError, "pipeline config: missing plan");
  cfg.plan.r_large = detail::get_field<double>(*plan, "r_large", "plan");
  cfg.plan.r_mini = detail::get_field<double>(*plan, "r_mini", "plan");
  cfg.plan.train.steps = detail::get_field<std::size_t>(*plan, "steps", "plan");
  cfg.plan.train.learning_rate = detail::get_field<double>(*plan, "learning_rate", "plan");
  cfg.plan.train.batch_size = detail::get_field<std::size_t>(*plan, "batch_size", "plan");
  cfg.plan.train.average_tail = detail::get_field<std::size_t>(*plan, "average_tail", "plan");
  cfg.plan.mini_floor = detail::get_field<std::size_t>(*plan, "mini_floor", "plan");
  cfg.plan.parallel = detail::get_field<bool>(*plan, "parallel", "plan");
  auto fin = j.find("final");
  if (fin == j.end()) raise(Errc::SchemaError, "pipeline config: missing final");
  cfg.final_train.steps = detail::get_field<std::size_t>(*fin, "steps", "final");
  cfg.final_train.learning_rate = detail::get_field<double>(*fin, "learning_rate", "final");
  cfg.final_train.batch_size = detail::get_field<std::size_t>(*fin, "batch_size", "final");
  cfg.final_train.average_tail = detail::get_field<std::size_t>(*fin, "average_tail", "final");
  cfg.final_train.dwa_temperature = detail::get_field<double>(*fin, "dwa_temperature", "final");
  auto suite = j.find("suite");
  if (suite == j.end()) raise(Errc::SchemaError, "pipeline config: missing suite");
  cfg.suite.sigma_min = detail::get_field<double>(*suite, "sigma_min", "suite");
  cfg.suite.sigma_max = detail::get_field<double>(*suite, "sigma_max", "suite");
  cfg.suite.noise_dims = detail::get_field<std::size_t>(*suite, "noise_dims", "suite");
  cfg.suite.shared_spread = detail::get_field<std::size_t>(*suite, "shared_spread", "suite");
  auto tasks = suite->find("tasks");
  if (tasks == suite->end() || !tasks->is_array())
    raise(Errc::SchemaError, "pipeline config: missing suite.tasks");
  for (const Json& jt : *tasks) {
    SyntheticTaskConfig t;
    t.id = detail::get_field<std::string>(jt, "id", "suite task");
    t.min_seq_len = detail::get_field<std::size_t>(jt, "min_seq_len", "suite task");
    t.max_seq_len = detail::get_field<std::size_t>(jt, "max_seq_len", "suite task");
    t.noise_level = detail::get_field<double>(jt, "noise_level", "suite task");
    t.samples = detail::get_field<std::size_t>(jt, "samples", "suite task");
    t.classes = detail::get_field<std::size_t>(jt, "classes", "suite task");
    cfg.suite.tasks.push_back(std::move(t));
  }
  auto overlaps = suite->find("overlaps");
  if (overlaps == suite->end() || !overlaps->is_array())
    raise(Errc::SchemaError, "pipeline config: missing suite.overlaps");
  for (const Json& jp : *overlaps) {
    PairOverlap p;
    p.a = detail::get_field<std::string>(jp, "a", "overlap");
    p.b = detail::get_field<std::string>(jp, "b", "overlap");
    p.overlap = detail::get_field<double>(jp, "overlap", "overlap");
    cfg.suite.overlaps.push_back(std::move(p));
  }
  return cfg;
}

/// FNV-1a hash of the canonical config serialization, hex-encoded; embedded
/// in every report for reproducibility checks.
inline std::string config_hash(const PipelineConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(cfg).dump())));
  return buf;
}

/// The default seeded 4-task suite: two overlapping pairs of different
/// strength, one isolated task, noise and sequence lengths spread so the
/// measured C and D actually separate.
inline PipelineConfig default_pipeline_config() {
  PipelineConfig cfg;
  cfg.suite.tasks = {
      {"alpha", 5, 15, 0.15, 3200, 4},
      {"bravo", 4, 12, 0.30, 1600, 4},
      {"carol", 3, 10, 0.50, 1200, 4},
      {"delta", 2, 8, 0.65, 900, 4},
  };
  cfg.suite.overlaps = {{"alpha", "bravo", 0.7}, {"alpha", "carol", 0.2}};
  cfg.suite.sigma_min = 0.35;
  cfg.suite.sigma_max = 1.0;
  cfg.suite.noise_dims = 8;
  cfg.suite.shared_spread = 12;
  cfg.plan.r_large = 0.25;
  cfg.plan.r_mini = 1.0 / 32.0;
  cfg.plan.mini_floor = 40;
  cfg.plan.train = {2500, 0.3, 48, 2.0, 1250};
  cfg.final_train = {800, 0.3, 48, 2.0, 400};
  cfg.hidden_dim = 8;
  cfg.mode = MeasurementMode::Standard;
  cfg.temperature.reset();  // resolve by auto_temperature
  cfg.alpha = {0.15, 0.15, 0.7};
  cfg.seed = 0;
  return cfg;
}

namespace detail {

inline std::vector<TaskData> full_train_pool(const SyntheticSuite& suite,
                                             const ValidatedTaskGraph& graph) {
  std::vector<TaskData> data;
  for (const TaskSpec& t : graph.tasks()) {
    const TaskDataset& ds = suite.dataset(t.id);
    std::vector<const Sample*> samples;
    samples.reserve(ds.train.size());
    for (const Sample& s : ds.train) samples.push_back(&s);
    data.push_back({t.id, graph.units()[graph.unit_of_task(t.id)].id, std::move(samples)});
  }
  return data;
}

}  // namespace detail

/// Runs the three pipeline stages end to end on synthetic data —
/// preparation runs, weight calculation, final weighted training — plus the
/// per-task and equal-weighting baselines and the other loss-aggregation
/// arms, then scores every arm on the held-out test splits. Bit-reproducible
/// for a fixed config.
inline PipelineResult run_full_pipeline(const PipelineConfig& cfg) {
  std::vector<std::string> warnings;
  const Rng root(cfg.seed);

  // Stage 0: data.
  const SyntheticSuite suite = generate_tasks(cfg.suite, root.fork("data").seed());
  const ValidatedTaskGraph graph =
      validate_task_graph(graph_for(suite), ValidationOptions{true});

  // Stage 1: preparation runs.
  RunPlan plan = cfg.plan;
  plan.seed = root.fork("prep").seed();
  MeasureOptions mopts;
  mopts.warnings = &warnings;
  const ValidationMatrix matrix =
      run_preparation(suite, graph, plan, cfg.mode, cfg.hidden_dim, &warnings);

  // Stage 2: weights.
  const ContributionMatrix cm = contribution_matrix(matrix, graph, cfg.mode, mopts);
  const DifficultyVector dv =
      difficulty_vector(matrix, graph, difficulty_approach_for(cfg.mode), mopts);
  const AlphaCoefficients alpha(cfg.alpha[0], cfg.alpha[1], cfg.alpha[2]);

  double chosen_t;
  bool t_auto = !cfg.temperature.has_value();
  bool t_attained = true;
  if (cfg.temperature) {
    chosen_t = *cfg.temperature;
  } else {
    const StrategyScores scores{outward_contribution(cm), inward_contribution(cm), dv.values()};
    const AutoTemperatureResult r = auto_temperature(scores, alpha);
    chosen_t = r.temperature;
    t_attained = r.attained;
    if (!r.attained)
      warnings.push_back("auto temperature hit the search bound without pulling every weight "
                         "into [0.5, 2.0]");
  }
  const Temperature temp(chosen_t);
  const WeightVector w_out = lambda_out(cm, temp);
  const WeightVector w_in = lambda_in(cm, temp);
  const WeightVector w_diff = lambda_diff(dv, temp);
  const WeightVector w_visatb = integrate(w_out, w_in, w_diff, alpha);

  // Stage 3: final training arms, all from one shared initialization.
  std::vector<std::pair<std::string, std::size_t>> head_specs;
  for (const TaskSpec& t : graph.tasks())
    head_specs.emplace_back(t.id, suite.dataset(t.id).classes);
  Rng init_rng = root.fork("final_init");
  const ToyModel base_model(suite.feature_dim, cfg.hidden_dim, head_specs, init_rng);
  const auto pool = detail::full_train_pool(suite, graph);

  std::map<std::string, double> final_loss;
  std::vector<MethodResults> all_results;

  // Per-task baseline: one model per task, trained on that task alone.
  {
    MethodResults stl("stl");
    for (const TaskSpec& t : graph.tasks()) {
      ToyModel model = base_model;
      std::vector<TaskData> own;
      for (const TaskData& td : pool)
        if (td.task == t.id) own.push_back(td);
      const TrainOutcome out =
          train(model, own, LossMode::Ew, nullptr, cfg.final_train, root.fork("stl:" + t.id));
      if (!out.trace.empty()) final_loss["stl:" + t.id] = out.trace.back();
      stl.set(t.id, kBenchMetric, evaluate_token_score(model, t.id, suite.dataset(t.id).test));
    }
    all_results.push_back(std::move(stl));
  }

  const std::array<std::pair<LossMode, const WeightVector*>, 5> arms{{
      {LossMode::Ew, nullptr},
      {LossMode::Vitw, &w_visatb},
      {LossMode::Tla, nullptr},
      {LossMode::Rlw, nullptr},
      {LossMode::Dwa, nullptr},
  }};
  for (const auto& [mode, w] : arms) {
    const std::string label =
        mode == LossMode::Vitw ? "visatb" : std::string(to_string(mode));
    ToyModel model = base_model;
    const TrainOutcome out =
        train(model, pool, mode, w, cfg.final_train, root.fork("final:" + label));
    if (!out.trace.empty()) final_loss[label] = out.trace.back();
    MethodResults r(label);
    for (const TaskSpec& t : graph.tasks())
      r.set(t.id, kBenchMetric, evaluate_token_score(model, t.id, suite.dataset(t.id).test));
    all_results.push_back(std::move(r));
  }

  const std::vector<MethodDelta> deltas =
      compare_methods(all_results, find_method(all_results, "stl"), graph);

  return PipelineResult{
      cfg.seed,
      config_hash(cfg),
      chosen_t,
      t_auto,
      t_attained,
      cost_estimate(graph.unit_count(), cfg.plan.r_large, cfg.plan.r_mini),
      matrix,
      cm,
      dv,
      w_out,
      w_in,
      w_diff,
      w_visatb,
      deltas,
      std::move(final_loss),
      std::move(warnings),
  };
}

/// Full machine-readable report: config echo and hash, seed, measured C/D,
/// the four weight vectors, per-method metrics, cost estimate, warnings. No
/// wall-clock values — byte-identical across reruns of the same config.
inline Json pipeline_report_json(const PipelineConfig& cfg, const PipelineResult& res) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = res.seed;
  j["config_hash"] = res.config_hash;
  j["config"] = to_json(cfg);
  Json temp;
  temp["value"] = res.temperature;
  temp["auto"] = res.temperature_auto;
  temp["attained"] = res.temperature_attained;
  j["temperature"] = std::move(temp);
  j["cost_estimate"] = res.cost;
  j["validation_matrix"] = to_json(res.prep_matrix);
  j["contribution"] = to_json(res.contribution);
  j["difficulty"] = to_json(res.difficulty);
  Json weights;
  weights["out"] = to_json(res.lambda_out);
  weights["in"] = to_json(res.lambda_in);
  weights["diff"] = to_json(res.lambda_diff);
  weights["visatb"] = to_json(res.lambda_visatb);
  j["weights"] = std::move(weights);
  j["metrics"] = metrics_report_json(res.deltas, "stl");
  Json losses;
  for (const auto& [label, loss] : res.final_loss) losses[label] = loss;
  j["final_loss"] = std::move(losses);
  j["warnings"] = res.warnings;
  return j;
}

/// Plain-text counterpart of the JSON report.
inline std::string pipeline_report_text(const PipelineResult& res) {
  std::string out;
  out += "seed " + std::to_string(res.seed) + ", config " + res.config_hash + "\n";
  out += "temperature " + format_fixed(res.temperature, 4) +
         (res.temperature_auto ? " (auto)" : "") +
         (res.temperature_attained ? "" : " [band not attained]") + "\n";
  out += "preparation cost estimate " + format_fixed(res.cost, 4) +
         "x final training\n\n";
  out += "contribution matrix\n" + contribution_table(res.contribution) + "\n";
  out += "difficulty\n" + difficulty_table(res.difficulty) + "\n";
  TextTable weights({"unit", "out", "in", "diff", "visatb"});
  for (std::size_t i = 0; i < res.lambda_visatb.size(); ++i) {
    const std::string& id = res.lambda_visatb.unit_ids()[i];
    weights.add_row({id, format_fixed(res.lambda_out.value_at(id), 4),
                     format_fixed(res.lambda_in.value_at(id), 4),
                     format_fixed(res.lambda_diff.value_at(id), 4),
                     format_fixed(res.lambda_visatb.value_at(id), 4)});
  }
  out += "weights\n" + weights.str() + "\n";
  out += metrics_report_table(res.deltas, "stl");
  if (!res.warnings.empty()) {
    out += "\nwarnings:\n";
    for (const std::string& w : res.warnings) out += "  - " + w + "\n";
  }
  return out;
}

}  // namespace visatb
