// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace visatb {

/// Insertion-ordered JSON document. All serialization in the library uses
/// this alias so emitted files are byte-stable across runs.
using Json = nlohmann::ordered_json;

/// Current on-disk schema version for every JSON document the library emits.
inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Metric and task descriptions
// ---------------------------------------------------------------------------

/// Orientation of a metric: whether improvement means the value goes up or
/// down (e.g. accuracy vs. word error rate).
enum class MetricDirection { HigherIsBetter, LowerIsBetter };

inline std::string_view to_string(MetricDirection d) {
  return d == MetricDirection::HigherIsBetter ? "higher_is_better" : "lower_is_better";
}

inline MetricDirection metric_direction_from_string(std::string_view s) {
  if (s == "higher_is_better") return MetricDirection::HigherIsBetter;
  if (s == "lower_is_better") return MetricDirection::LowerIsBetter;
  raise(Errc::SchemaError, "unknown metric direction \"" + std::string(s) + "\"");
}

/// One evaluation metric of a task.
struct MetricSpec {
  std::string name;
  MetricDirection direction = MetricDirection::HigherIsBetter;

  friend bool operator==(const MetricSpec&, const MetricSpec&) = default;
};

/// One task: identifier, optional group label, training-set size, and the
/// ordered list of metrics it is evaluated on. When primary_metric is set,
/// performance aggregation uses that metric alone instead of the mean over
/// all metrics.
struct TaskSpec {
  std::string id;
  std::optional<std::string> group;
  std::uint64_t dataset_size = 0;
  std::vector<MetricSpec> metrics;
  std::optional<std::string> primary_metric;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Whether balancing operates on individual tasks or on task groups.
enum class GroupingMode { PerTask, PerGroup };

inline std::string_view to_string(GroupingMode m) {
  return m == GroupingMode::PerTask ? "per_task" : "per_group";
}

inline GroupingMode grouping_mode_from_string(std::string_view s) {
  if (s == "per_task") return GroupingMode::PerTask;
  if (s == "per_group") return GroupingMode::PerGroup;
  raise(Errc::SchemaError, "unknown grouping mode \"" + std::string(s) + "\"");
}

/// The full multi-task setup: an ordered list of tasks plus the grouping
/// mode. Validate with validate_task_graph() before use.
struct TaskGraph {
  std::vector<TaskSpec> tasks;
  GroupingMode grouping_mode = GroupingMode::PerTask;
};

// ---------------------------------------------------------------------------
// Preparation-run identities
// ---------------------------------------------------------------------------

/// Kind of a preparation-stage training run.
enum class RunKind {
  MiniOnly,      ///< trained on the union of all mini subsets
  TaskPlusMini,  ///< trained on one unit's full data plus all mini subsets
  TaskOnly,      ///< trained on one unit's full data alone
  MiniOfTask,    ///< trained on one unit's mini subset alone
  Base,          ///< the untrained starting model (no training run)
};

/// Identity of one preparation run. Unit-scoped kinds carry the unit id;
/// MiniOnly and Base leave it empty.
struct RunId {
  RunKind kind = RunKind::MiniOnly;
  std::string unit;

  static RunId mini_only() { return {RunKind::MiniOnly, {}}; }
  static RunId base() { return {RunKind::Base, {}}; }
  static RunId task_plus_mini(std::string_view u) { return {RunKind::TaskPlusMini, std::string(u)}; }
  static RunId task_only(std::string_view u) { return {RunKind::TaskOnly, std::string(u)}; }
  static RunId mini_of_task(std::string_view u) { return {RunKind::MiniOfTask, std::string(u)}; }

  /// Human-readable form: "mini", "vqa+mini", "vqa", "mini(vqa)", "base".
  std::string label() const {
    switch (kind) {
      case RunKind::MiniOnly: return "mini";
      case RunKind::TaskPlusMini: return unit + "+mini";
      case RunKind::TaskOnly: return unit;
      case RunKind::MiniOfTask: return "mini(" + unit + ")";
      case RunKind::Base: return "base";
    }
    return "?";
  }

  friend bool operator==(const RunId&, const RunId&) = default;
  friend auto operator<=>(const RunId&, const RunId&) = default;
};

inline std::string_view to_string(RunKind k) {
  switch (k) {
    case RunKind::MiniOnly: return "mini_only";
    case RunKind::TaskPlusMini: return "task_plus_mini";
    case RunKind::TaskOnly: return "task_only";
    case RunKind::MiniOfTask: return "mini_of_task";
    case RunKind::Base: return "base";
  }
  return "?";
}

inline RunKind run_kind_from_string(std::string_view s) {
  if (s == "mini_only") return RunKind::MiniOnly;
  if (s == "task_plus_mini") return RunKind::TaskPlusMini;
  if (s == "task_only") return RunKind::TaskOnly;
  if (s == "mini_of_task") return RunKind::MiniOfTask;
  if (s == "base") return RunKind::Base;
  raise(Errc::SchemaError, "unknown run kind \"" + std::string(s) + "\"");
}

/// True if the run kind refers to a specific unit (and so RunId::unit must be
/// set).
inline bool run_kind_has_unit(RunKind k) {
  return k == RunKind::TaskPlusMini || k == RunKind::TaskOnly || k == RunKind::MiniOfTask;
}

// ---------------------------------------------------------------------------
// Validated graph and balancing units
// ---------------------------------------------------------------------------

/// One balancing unit: a task in PerTask mode, a group of tasks in PerGroup
/// mode. Unit order follows task order (groups by first appearance).
struct BalancingUnit {
  std::string id;
  std::vector<std::size_t> task_indices;  ///< indices into TaskGraph::tasks
  std::uint64_t dataset_size = 0;         ///< summed over member tasks
};

struct ValidationOptions {
  /// Require at least two balancing units. Weighing a single unit is
  /// meaningless, but run planning for one unit is legitimate, so this is
  /// opt-in for the pipeline entry points that actually balance.
  bool require_balancing = false;
};

/// A TaskGraph whose invariants have been checked, with the effective unit
/// list materialized. Immutable; obtain via validate_task_graph().
class ValidatedTaskGraph {
 public:
  const TaskGraph& graph() const { return graph_; }
  const std::vector<TaskSpec>& tasks() const { return graph_.tasks; }
  const std::vector<BalancingUnit>& units() const { return units_; }

  /// Number of balancing units, the N of every weight formula.
  std::size_t unit_count() const { return units_.size(); }

  bool has_unit(std::string_view id) const {
    return unit_lookup_.find(id) != unit_lookup_.end();
  }

  std::size_t unit_index(std::string_view id) const {
    auto it = unit_lookup_.find(id);
    if (it == unit_lookup_.end())
      raise(Errc::UnknownUnit, "unknown balancing unit \"" + std::string(id) + "\"");
    return it->second;
  }

  const BalancingUnit& unit(std::string_view id) const { return units_[unit_index(id)]; }

  bool has_task(std::string_view id) const {
    return task_lookup_.find(id) != task_lookup_.end();
  }

  std::size_t task_index(std::string_view id) const {
    auto it = task_lookup_.find(id);
    if (it == task_lookup_.end())
      raise(Errc::UnknownTask, "unknown task \"" + std::string(id) + "\"");
    return it->second;
  }

  const TaskSpec& task(std::string_view id) const { return graph_.tasks[task_index(id)]; }

  /// Index of the unit that contains the given task.
  std::size_t unit_of_task(std::string_view task_id) const {
    return task_to_unit_[task_index(task_id)];
  }

 private:
  friend ValidatedTaskGraph validate_task_graph(const TaskGraph&, const ValidationOptions&);

  TaskGraph graph_;
  std::vector<BalancingUnit> units_;
  std::map<std::string, std::size_t, std::less<>> unit_lookup_;
  std::map<std::string, std::size_t, std::less<>> task_lookup_;
  std::vector<std::size_t> task_to_unit_;
};

/// Checks every TaskSpec/TaskGraph invariant and materializes the balancing
/// unit list. Throws Error on: duplicate task id, empty metric list,
/// duplicate metric name within a task, empty identifiers, a missing group
/// label in PerGroup mode, or (when opts.require_balancing) fewer than two
/// units.
inline ValidatedTaskGraph validate_task_graph(const TaskGraph& graph,
                                              const ValidationOptions& opts = {}) {
  ValidatedTaskGraph v;
  v.graph_ = graph;
  for (std::size_t t = 0; t < graph.tasks.size(); ++t) {
    const TaskSpec& task = graph.tasks[t];
    if (task.id.empty()) raise(Errc::InvalidConfig, "task with empty id");
    if (!v.task_lookup_.emplace(task.id, t).second)
      raise(Errc::DuplicateTaskId, "duplicate task id \"" + task.id + "\"");
    if (task.metrics.empty())
      raise(Errc::EmptyMetrics, "task \"" + task.id + "\" has no metrics");
    std::map<std::string_view, int> seen;
    for (const MetricSpec& m : task.metrics) {
      if (m.name.empty())
        raise(Errc::InvalidConfig, "task \"" + task.id + "\" has a metric with empty name");
      if (++seen[m.name] > 1)
        raise(Errc::InvalidConfig,
              "task \"" + task.id + "\" lists metric \"" + m.name + "\" twice");
    }
    if (task.primary_metric && seen.find(*task.primary_metric) == seen.end())
      raise(Errc::InvalidConfig, "task \"" + task.id + "\": primary metric \"" +
                                     *task.primary_metric + "\" is not one of its metrics");
  }

  v.task_to_unit_.resize(graph.tasks.size());
  if (graph.grouping_mode == GroupingMode::PerTask) {
    for (std::size_t t = 0; t < graph.tasks.size(); ++t) {
      const TaskSpec& task = graph.tasks[t];
      v.unit_lookup_.emplace(task.id, v.units_.size());
      v.task_to_unit_[t] = v.units_.size();
      v.units_.push_back({task.id, {t}, task.dataset_size});
    }
  } else {
    for (std::size_t t = 0; t < graph.tasks.size(); ++t) {
      const TaskSpec& task = graph.tasks[t];
      if (!task.group || task.group->empty())
        raise(Errc::MissingGroup,
              "task \"" + task.id + "\" has no group label in per-group mode");
      auto [it, inserted] = v.unit_lookup_.emplace(*task.group, v.units_.size());
      if (inserted) v.units_.push_back({*task.group, {}, 0});
      BalancingUnit& u = v.units_[it->second];
      u.task_indices.push_back(t);
      u.dataset_size += task.dataset_size;
      v.task_to_unit_[t] = it->second;
    }
  }

  if (opts.require_balancing && v.units_.size() < 2)
    raise(Errc::TooFewUnits, "balancing requires at least 2 units, got " +
                                 std::to_string(v.units_.size()));
  return v;
}

// ---------------------------------------------------------------------------
// Measurement modes and run planning
// ---------------------------------------------------------------------------

/// How contribution and difficulty are measured.
///  - Standard: mini-subset runs plus one task+mini run per unit.
///  - ChatSimplified: base model plus task-only and mini-only-of-task runs,
///    the cheaper form suited to chat-style stacks.
///  - PreciseDifficulty: the Standard set plus a per-unit mini-subset run,
///    so difficulty gets an exact same-distribution reference.
enum class MeasurementMode { Standard, ChatSimplified, PreciseDifficulty };

inline std::string_view to_string(MeasurementMode m) {
  switch (m) {
    case MeasurementMode::Standard: return "standard";
    case MeasurementMode::ChatSimplified: return "chat";
    case MeasurementMode::PreciseDifficulty: return "precise";
  }
  return "?";
}

inline MeasurementMode measurement_mode_from_string(std::string_view s) {
  if (s == "standard") return MeasurementMode::Standard;
  if (s == "chat") return MeasurementMode::ChatSimplified;
  if (s == "precise") return MeasurementMode::PreciseDifficulty;
  raise(Errc::SchemaError, "unknown measurement mode \"" + std::string(s) + "\"");
}

/// The preparation runs a mode needs, in a fixed, documented order:
///  - Standard: mini, then unit+mini per unit            (N+1 runs)
///  - ChatSimplified: base, unit per unit, mini(unit)    (2N+1, base untrained)
///  - PreciseDifficulty: Standard set, then mini(unit)   (2N+1 runs)
/// Deterministic and order-stable for a given validated graph.
inline std::vector<RunId> required_runs(const ValidatedTaskGraph& graph, MeasurementMode mode) {
  std::vector<RunId> runs;
  const auto& units = graph.units();
  switch (mode) {
    case MeasurementMode::Standard:
      runs.push_back(RunId::mini_only());
      for (const auto& u : units) runs.push_back(RunId::task_plus_mini(u.id));
      break;
    case MeasurementMode::ChatSimplified:
      runs.push_back(RunId::base());
      for (const auto& u : units) runs.push_back(RunId::task_only(u.id));
      for (const auto& u : units) runs.push_back(RunId::mini_of_task(u.id));
      break;
    case MeasurementMode::PreciseDifficulty:
      runs.push_back(RunId::mini_only());
      for (const auto& u : units) runs.push_back(RunId::task_plus_mini(u.id));
      for (const auto& u : units) runs.push_back(RunId::mini_of_task(u.id));
      break;
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Validation performance matrix
// ---------------------------------------------------------------------------

/// Performance values V(run, task, metric) for the preparation runs. Values
/// are stored raw (as evaluated); metric direction is applied downstream.
/// Missing lookups throw, never default to zero.
class ValidationMatrix {
 public:
  struct Entry {
    RunId run;
    std::string task;
    std::string metric;
    double value = 0.0;
  };

  /// Inserts or overwrites one measurement. Rejects non-finite values.
  void set(const RunId& run, std::string_view task, std::string_view metric, double value) {
    if (!std::isfinite(value))
      raise(Errc::NonFiniteValue, "non-finite performance value for run=" + run.label() +
                                      " task=" + std::string(task) +
                                      " metric=" + std::string(metric));
    entries_[Key{run, std::string(task), std::string(metric)}] = value;
  }

  bool contains(const RunId& run, std::string_view task, std::string_view metric) const {
    return entries_.find(Key{run, std::string(task), std::string(metric)}) != entries_.end();
  }

  /// Performance value for one (run, task, metric); throws MissingEntry when
  /// absent.
  double at(const RunId& run, std::string_view task, std::string_view metric) const {
    auto it = entries_.find(Key{run, std::string(task), std::string(metric)});
    if (it == entries_.end())
      raise(Errc::MissingEntry, "no entry for run=" + run.label() + " task=" +
                                    std::string(task) + " metric=" + std::string(metric));
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// All entries in deterministic (run, task, metric) order.
  std::vector<Entry> entries() const {
    std::vector<Entry> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back({k.run, k.task, k.metric, v});
    return out;
  }

  /// Keys of required entries that are absent: the cross product of the given
  /// runs with every (task, metric) of the graph, minus what is stored.
  std::vector<Entry> missing_entries(const ValidatedTaskGraph& graph,
                                     const std::vector<RunId>& runs) const {
    std::vector<Entry> gaps;
    for (const RunId& run : runs)
      for (const TaskSpec& task : graph.tasks())
        for (const MetricSpec& m : task.metrics)
          if (!contains(run, task.id, m.name)) gaps.push_back({run, task.id, m.name, 0.0});
    return gaps;
  }

  friend bool operator==(const ValidationMatrix& a, const ValidationMatrix& b) {
    return a.entries_ == b.entries_;
  }

 private:
  struct Key {
    RunId run;
    std::string task;
    std::string metric;
    friend auto operator<=>(const Key&, const Key&) = default;
    friend bool operator==(const Key&, const Key&) = default;
  };
  std::map<Key, double> entries_;
};

// ---------------------------------------------------------------------------
// Weight vectors
// ---------------------------------------------------------------------------

/// Which strategy produced a weight vector.
enum class WeightStrategy { Out, In, Diff, Integrated, Manual };

inline std::string_view to_string(WeightStrategy s) {
  switch (s) {
    case WeightStrategy::Out: return "out";
    case WeightStrategy::In: return "in";
    case WeightStrategy::Diff: return "diff";
    case WeightStrategy::Integrated: return "integrated";
    case WeightStrategy::Manual: return "manual";
  }
  return "?";
}

inline WeightStrategy weight_strategy_from_string(std::string_view s) {
  if (s == "out") return WeightStrategy::Out;
  if (s == "in") return WeightStrategy::In;
  if (s == "diff") return WeightStrategy::Diff;
  if (s == "integrated") return WeightStrategy::Integrated;
  if (s == "manual") return WeightStrategy::Manual;
  raise(Errc::SchemaError, "unknown weight strategy \"" + std::string(s) + "\"");
}

/// A positive weight per balancing unit, tagged with the strategy that
/// produced it and (when applicable) the temperature / mixing coefficients
/// used. Construction checks positivity and finiteness; softmax-derived
/// vectors additionally sum to N by construction in the weights module.
class WeightVector {
 public:
  WeightVector() = default;

  WeightVector(WeightStrategy strategy, std::vector<std::string> unit_ids,
               std::vector<double> values)
      : strategy_(strategy), unit_ids_(std::move(unit_ids)), values_(std::move(values)) {
    if (unit_ids_.size() != values_.size())
      raise(Errc::InvalidConfig, "weight vector ids/values length mismatch");
    if (unit_ids_.empty()) raise(Errc::InvalidConfig, "empty weight vector");
    std::map<std::string_view, std::size_t> lookup;
    for (std::size_t i = 0; i < unit_ids_.size(); ++i) {
      if (unit_ids_[i].empty()) raise(Errc::InvalidConfig, "weight for empty unit id");
      if (!lookup.emplace(unit_ids_[i], i).second)
        raise(Errc::InvalidConfig, "duplicate unit \"" + unit_ids_[i] + "\" in weight vector");
      if (!std::isfinite(values_[i]) || values_[i] <= 0.0)
        raise(Errc::NonFiniteValue, "weight for unit \"" + unit_ids_[i] +
                                        "\" must be finite and positive, got " +
                                        std::to_string(values_[i]));
    }
    for (auto& [k, i] : lookup) lookup_.emplace(std::string(k), i);
  }

  /// All-ones vector (the equal-weighting baseline).
  static WeightVector ones(std::vector<std::string> unit_ids,
                           WeightStrategy strategy = WeightStrategy::Manual) {
    std::vector<double> v(unit_ids.size(), 1.0);
    return WeightVector(strategy, std::move(unit_ids), std::move(v));
  }

  WeightStrategy strategy() const { return strategy_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool contains(std::string_view unit) const {
    return lookup_.find(unit) != lookup_.end();
  }

  double value_at(std::string_view unit) const {
    auto it = lookup_.find(unit);
    if (it == lookup_.end())
      raise(Errc::MissingWeight, "no weight for unit \"" + std::string(unit) + "\"");
    return values_[it->second];
  }

  double sum() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s;
  }

  /// Temperature used to produce this vector, when softmax-derived.
  const std::optional<double>& temperature() const { return temperature_; }
  void set_temperature(double t) { temperature_ = t; }

  /// Mixing coefficients used, when produced by integration.
  const std::optional<std::array<double, 3>>& alpha() const { return alpha_; }
  void set_alpha(const std::array<double, 3>& a) { alpha_ = a; }

 private:
  WeightStrategy strategy_ = WeightStrategy::Manual;
  std::vector<std::string> unit_ids_;
  std::vector<double> values_;
  std::map<std::string, std::size_t, std::less<>> lookup_;
  std::optional<double> temperature_;
  std::optional<std::array<double, 3>> alpha_;
};

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace detail {

inline void require_schema_version(const Json& j, std::string_view what) {
  if (!j.is_object())
    raise(Errc::SchemaError, std::string(what) + ": document is not a JSON object");
  auto it = j.find("schema_version");
  if (it == j.end())
    raise(Errc::SchemaError, std::string(what) + ": missing schema_version");
  if (!it->is_number_integer() || it->get<int>() != kSchemaVersion)
    raise(Errc::SchemaError, std::string(what) + ": unsupported schema_version " + it->dump() +
                                 " (expected " + std::to_string(kSchemaVersion) + ")");
}

template <typename T>
T get_field(const Json& j, std::string_view key, std::string_view what) {
  auto it = j.find(key);
  if (it == j.end())
    raise(Errc::SchemaError, std::string(what) + ": missing field \"" + std::string(key) + "\"");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    raise(Errc::SchemaError, std::string(what) + ": field \"" + std::string(key) +
                                 "\" has the wrong type");
  }
}

}  // namespace detail

inline Json to_json(const RunId& run) {
  Json j;
  j["kind"] = std::string(to_string(run.kind));
  if (run_kind_has_unit(run.kind)) j["task"] = run.unit;
  return j;
}

inline RunId run_id_from_json(const Json& j) {
  RunId run;
  run.kind = run_kind_from_string(detail::get_field<std::string>(j, "kind", "run id"));
  if (run_kind_has_unit(run.kind)) {
    run.unit = detail::get_field<std::string>(j, "task", "run id");
    if (run.unit.empty()) raise(Errc::SchemaError, "run id: empty task for unit-scoped kind");
  }
  return run;
}

inline Json to_json(const TaskGraph& graph) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["grouping_mode"] = std::string(to_string(graph.grouping_mode));
  Json tasks = Json::array();
  for (const TaskSpec& t : graph.tasks) {
    Json jt;
    jt["id"] = t.id;
    if (t.group) jt["group"] = *t.group;
    jt["dataset_size"] = t.dataset_size;
    Json metrics = Json::array();
    for (const MetricSpec& m : t.metrics) {
      Json jm;
      jm["name"] = m.name;
      jm["direction"] = std::string(to_string(m.direction));
      metrics.push_back(std::move(jm));
    }
    jt["metrics"] = std::move(metrics);
    if (t.primary_metric) jt["primary_metric"] = *t.primary_metric;
    tasks.push_back(std::move(jt));
  }
  j["tasks"] = std::move(tasks);
  return j;
}

inline TaskGraph task_graph_from_json(const Json& j) {
  detail::require_schema_version(j, "task graph");
  TaskGraph graph;
  graph.grouping_mode =
      grouping_mode_from_string(detail::get_field<std::string>(j, "grouping_mode", "task graph"));
  auto tasks = j.find("tasks");
  if (tasks == j.end() || !tasks->is_array())
    raise(Errc::SchemaError, "task graph: missing tasks array");
  for (const Json& jt : *tasks) {
    TaskSpec t;
    t.id = detail::get_field<std::string>(jt, "id", "task");
    if (jt.contains("group")) t.group = detail::get_field<std::string>(jt, "group", "task");
    t.dataset_size = detail::get_field<std::uint64_t>(jt, "dataset_size", "task");
    auto metrics = jt.find("metrics");
    if (metrics == jt.end() || !metrics->is_array())
      raise(Errc::SchemaError, "task \"" + t.id + "\": missing metrics array");
    for (const Json& jm : *metrics) {
      MetricSpec m;
      m.name = detail::get_field<std::string>(jm, "name", "metric");
      m.direction = metric_direction_from_string(
          detail::get_field<std::string>(jm, "direction", "metric"));
      t.metrics.push_back(std::move(m));
    }
    if (jt.contains("primary_metric"))
      t.primary_metric = detail::get_field<std::string>(jt, "primary_metric", "task");
    graph.tasks.push_back(std::move(t));
  }
  return graph;
}

inline Json to_json(const ValidationMatrix& matrix) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  Json entries = Json::array();
  for (const ValidationMatrix::Entry& e : matrix.entries()) {
    Json je;
    je["run"] = to_json(e.run);
    je["task"] = e.task;
    je["metric"] = e.metric;
    je["value"] = e.value;
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  return j;
}

inline ValidationMatrix validation_matrix_from_json(const Json& j) {
  detail::require_schema_version(j, "validation matrix");
  auto entries = j.find("entries");
  if (entries == j.end() || !entries->is_array())
    raise(Errc::SchemaError, "validation matrix: missing entries array");
  ValidationMatrix m;
  for (const Json& je : *entries) {
    auto run_field = je.find("run");
    if (run_field == je.end())
      raise(Errc::SchemaError, "validation matrix entry: missing run");
    RunId run = run_id_from_json(*run_field);
    auto task = detail::get_field<std::string>(je, "task", "validation matrix entry");
    auto metric = detail::get_field<std::string>(je, "metric", "validation matrix entry");
    auto value = detail::get_field<double>(je, "value", "validation matrix entry");
    m.set(run, task, metric, value);
  }
  return m;
}

inline Json to_json(const WeightVector& w) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["strategy_tag"] = std::string(to_string(w.strategy()));
  j["units"] = w.unit_ids();
  Json values;
  for (std::size_t i = 0; i < w.size(); ++i) values[w.unit_ids()[i]] = w.values()[i];
  j["values"] = std::move(values);
  if (w.temperature()) j["temperature"] = *w.temperature();
  if (w.alpha()) j["alpha"] = *w.alpha();
  return j;
}

inline WeightVector weight_vector_from_json(const Json& j) {
  detail::require_schema_version(j, "weight vector");
  auto strategy =
      weight_strategy_from_string(detail::get_field<std::string>(j, "strategy_tag", "weights"));
  auto units = detail::get_field<std::vector<std::string>>(j, "units", "weights");
  auto values_field = j.find("values");
  if (values_field == j.end() || !values_field->is_object())
    raise(Errc::SchemaError, "weights: missing values object");
  std::vector<double> values;
  values.reserve(units.size());
  for (const std::string& u : units) {
    auto it = values_field->find(u);
    if (it == values_field->end())
      raise(Errc::SchemaError, "weights: no value for unit \"" + u + "\"");
    values.push_back(it->get<double>());
  }
  if (values_field->size() != units.size())
    raise(Errc::SchemaError, "weights: values/units mismatch");
  WeightVector w(strategy, std::move(units), std::move(values));
  if (j.contains("temperature")) w.set_temperature(j.at("temperature").get<double>());
  if (j.contains("alpha")) w.set_alpha(j.at("alpha").get<std::array<double, 3>>());
  return w;
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

/// Parses a JSON document from disk. IoError when unreadable, SchemaError on
/// malformed JSON.
inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::IoError, "cannot open \"" + path + "\" for reading");
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::SchemaError, "\"" + path + "\" is not valid JSON: " + e.what());
  }
  return j;
}

/// Writes a JSON document with stable formatting (2-space indent, trailing
/// newline). IoError on failure.
inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) raise(Errc::IoError, "cannot open \"" + path + "\" for writing");
  out << j.dump(2) << '\n';
  if (!out) raise(Errc::IoError, "failed writing \"" + path + "\"");
}

inline TaskGraph load_task_graph(const std::string& path) {
  return task_graph_from_json(load_json(path));
}

inline ValidationMatrix load_validation_matrix(const std::string& path) {
  return validation_matrix_from_json(load_json(path));
}

}  // namespace visatb
