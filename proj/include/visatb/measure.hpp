// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "table.hpp"

namespace visatb {

// ---------------------------------------------------------------------------
// Options and result types
// ---------------------------------------------------------------------------

/// Knobs for contribution/difficulty computation. A denominator is considered
/// degenerate when its magnitude falls below
///   denominator_rel_eps * |reference value| + denominator_abs_floor.
struct MeasureOptions {
  double denominator_rel_eps = 1e-9;
  double denominator_abs_floor = 1e-12;

  /// When true, a degenerate contribution denominator yields 0 (with a
  /// warning) instead of an error. Difficulty never falls back: a vanishing
  /// reference performance leaves the gap undefined.
  bool fallback_zero_contribution = false;

  /// Optional sink for non-fatal diagnostics (mixed-sign performance values,
  /// fallback activations). Ignored when null.
  std::vector<std::string>* warnings = nullptr;
};

/// N×N inter-unit contribution, entry (i, j) = effect of unit i's data on
/// unit j's validation performance, normalized by unit j's own effect.
/// Diagonal is 1 by convention and is excluded from downstream averages.
class ContributionMatrix {
 public:
  ContributionMatrix(std::vector<std::string> unit_ids,
                     std::vector<std::vector<double>> values)
      : unit_ids_(std::move(unit_ids)), values_(std::move(values)) {
    const std::size_t n = unit_ids_.size();
    if (values_.size() != n)
      raise(Errc::InvalidConfig, "contribution matrix row count does not match unit count");
    for (std::size_t i = 0; i < n; ++i) {
      if (values_[i].size() != n)
        raise(Errc::InvalidConfig, "contribution matrix is not square");
      for (std::size_t j = 0; j < n; ++j)
        if (!std::isfinite(values_[i][j]))
          raise(Errc::NonFiniteValue, "non-finite contribution at (" + unit_ids_[i] + ", " +
                                          unit_ids_[j] + ")");
      if (values_[i][i] != 1.0)
        raise(Errc::InvalidConfig, "contribution diagonal must be exactly 1 at " + unit_ids_[i]);
    }
  }

  std::size_t size() const { return unit_ids_.size(); }
  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<std::vector<double>>& values() const { return values_; }
  double at(std::size_t i, std::size_t j) const { return values_[i][j]; }

 private:
  std::vector<std::string> unit_ids_;
  std::vector<std::vector<double>> values_;
};

/// Per-unit intra-task difficulty D, one entry per balancing unit.
class DifficultyVector {
 public:
  DifficultyVector(std::vector<std::string> unit_ids, std::vector<double> values)
      : unit_ids_(std::move(unit_ids)), values_(std::move(values)) {
    if (unit_ids_.size() != values_.size())
      raise(Errc::InvalidConfig, "difficulty ids/values length mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i]))
        raise(Errc::NonFiniteValue, "non-finite difficulty for unit " + unit_ids_[i]);
  }

  std::size_t size() const { return unit_ids_.size(); }
  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<std::string> unit_ids_;
  std::vector<double> values_;
};

/// How the per-unit difficulty ratio is measured:
///  - RealReuse: reuse the Standard preparation runs — gap between the
///    all-mini model and the unit's task+mini model. No extra runs.
///  - Precise: gap between a model trained on the unit's mini subset alone
///    and its task+mini model, removing other tasks' influence on the
///    numerator.
///  - ChatSimplified: gap between the unit's mini-subset-only model and its
///    task-only model, matching the simplified run plan.
enum class DifficultyApproach { RealReuse, Precise, ChatSimplified };

inline std::string_view to_string(DifficultyApproach a) {
  switch (a) {
    case DifficultyApproach::RealReuse: return "real_reuse";
    case DifficultyApproach::Precise: return "precise";
    case DifficultyApproach::ChatSimplified: return "chat";
  }
  return "?";
}

inline DifficultyApproach difficulty_approach_from_string(std::string_view s) {
  if (s == "real_reuse") return DifficultyApproach::RealReuse;
  if (s == "precise") return DifficultyApproach::Precise;
  if (s == "chat") return DifficultyApproach::ChatSimplified;
  raise(Errc::SchemaError, "unknown difficulty approach \"" + std::string(s) + "\"");
}

/// The difficulty approach whose required runs a measurement mode provides.
inline DifficultyApproach difficulty_approach_for(MeasurementMode mode) {
  switch (mode) {
    case MeasurementMode::Standard: return DifficultyApproach::RealReuse;
    case MeasurementMode::PreciseDifficulty: return DifficultyApproach::Precise;
    case MeasurementMode::ChatSimplified: return DifficultyApproach::ChatSimplified;
  }
  return DifficultyApproach::RealReuse;
}

// ---------------------------------------------------------------------------
// Performance aggregation
// ---------------------------------------------------------------------------

namespace detail {

/// Direction-oriented scalar for one task under one run: the task's primary
/// metric if designated, otherwise the mean over its metrics. LowerIsBetter
/// values are negated so higher is always better.
inline double task_performance(const ValidationMatrix& matrix, const TaskSpec& task,
                               const RunId& run) {
  auto oriented = [&](const MetricSpec& m) {
    double v = matrix.at(run, task.id, m.name);
    return m.direction == MetricDirection::LowerIsBetter ? -v : v;
  };
  if (task.primary_metric) {
    for (const MetricSpec& m : task.metrics)
      if (m.name == *task.primary_metric) return oriented(m);
    raise(Errc::InvalidConfig,
          "task \"" + task.id + "\": primary metric \"" + *task.primary_metric + "\" not found");
  }
  double sum = 0.0;
  for (const MetricSpec& m : task.metrics) sum += oriented(m);
  return sum / static_cast<double>(task.metrics.size());
}

inline void warn(const MeasureOptions& opts, std::string message) {
  if (opts.warnings) opts.warnings->push_back(std::move(message));
}

}  // namespace detail

/// Scalar performance of one balancing unit under one run: the mean over the
/// unit's tasks of their direction-oriented per-task values. Missing entries
/// throw; nothing is imputed.
inline double aggregate_performance(const ValidationMatrix& matrix,
                                    const ValidatedTaskGraph& graph, const RunId& run,
                                    std::string_view unit_id) {
  const BalancingUnit& unit = graph.unit(unit_id);
  double sum = 0.0;
  for (std::size_t t : unit.task_indices)
    sum += detail::task_performance(matrix, graph.tasks()[t], run);
  return sum / static_cast<double>(unit.task_indices.size());
}

// ---------------------------------------------------------------------------
// Contribution
// ---------------------------------------------------------------------------

namespace detail {

struct ContributionRuns {
  RunId reference;            // shared baseline run
  RunKind per_unit_kind;      // run kind holding each unit's own data
};

inline ContributionRuns contribution_runs(MeasurementMode mode) {
  if (mode == MeasurementMode::ChatSimplified)
    return {RunId::base(), RunKind::TaskOnly};
  return {RunId::mini_only(), RunKind::TaskPlusMini};
}

}  // namespace detail

/// Contribution of unit i to unit j: the gain on j from adding i's data,
/// normalized by the gain from adding j's own data, both relative to the
/// mode's shared baseline run. Returns exactly 1 on the diagonal.
inline double contribution(const ValidationMatrix& matrix, const ValidatedTaskGraph& graph,
                           std::string_view i, std::string_view j, MeasurementMode mode,
                           const MeasureOptions& opts = {}) {
  graph.unit_index(i);  // validate both ids up front
  graph.unit_index(j);
  if (i == j) return 1.0;

  const auto runs = detail::contribution_runs(mode);
  const RunId i_run{runs.per_unit_kind, std::string(i)};
  const RunId j_run{runs.per_unit_kind, std::string(j)};

  const double v_ref = aggregate_performance(matrix, graph, runs.reference, j);
  const double v_i = aggregate_performance(matrix, graph, i_run, j);
  const double v_j = aggregate_performance(matrix, graph, j_run, j);

  const double denom = v_j - v_ref;
  const double eps = opts.denominator_rel_eps * std::fabs(v_j) + opts.denominator_abs_floor;
  if (std::fabs(denom) < eps) {
    if (opts.fallback_zero_contribution) {
      detail::warn(opts, "contribution " + std::string(i) + "->" + std::string(j) +
                             ": degenerate denominator (" + format_fixed(denom, 12) +
                             "), falling back to 0");
      return 0.0;
    }
    raise(Errc::DegenerateDenominator,
          "contribution " + std::string(i) + "->" + std::string(j) +
              ": denominator " + format_fixed(denom, 12) + " below threshold " +
              format_fixed(eps, 12));
  }
  return (v_i - v_ref) / denom;
}

/// Full N×N contribution matrix; diagonal 1, off-diagonal via contribution().
inline ContributionMatrix contribution_matrix(const ValidationMatrix& matrix,
                                              const ValidatedTaskGraph& graph,
                                              MeasurementMode mode,
                                              const MeasureOptions& opts = {}) {
  const std::size_t n = graph.unit_count();
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const BalancingUnit& u : graph.units()) ids.push_back(u.id);

  std::vector<std::vector<double>> values(n, std::vector<double>(n, 1.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b) values[a][b] = contribution(matrix, graph, ids[a], ids[b], mode, opts);
  return ContributionMatrix(std::move(ids), std::move(values));
}

// ---------------------------------------------------------------------------
// Difficulty
// ---------------------------------------------------------------------------

/// Intra-task difficulty of unit i: one minus the ratio of a low-data
/// reference performance to the performance of a model trained on the unit's
/// own data. Run pair per approach:
///  - RealReuse:      1 − V_i(mini)     / V_i(i+mini)
///  - Precise:        1 − V_i(mini(i))  / V_i(i+mini)
///  - ChatSimplified: 1 − V_i(mini(i))  / V_i(i)
inline double difficulty(const ValidationMatrix& matrix, const ValidatedTaskGraph& graph,
                         std::string_view i, DifficultyApproach approach,
                         const MeasureOptions& opts = {}) {
  graph.unit_index(i);
  RunId num_run, den_run;
  switch (approach) {
    case DifficultyApproach::RealReuse:
      num_run = RunId::mini_only();
      den_run = RunId::task_plus_mini(i);
      break;
    case DifficultyApproach::Precise:
      num_run = RunId::mini_of_task(i);
      den_run = RunId::task_plus_mini(i);
      break;
    case DifficultyApproach::ChatSimplified:
      num_run = RunId::mini_of_task(i);
      den_run = RunId::task_only(i);
      break;
  }

  const double num = aggregate_performance(matrix, graph, num_run, i);
  const double den = aggregate_performance(matrix, graph, den_run, i);

  const double eps = opts.denominator_rel_eps * std::fabs(den) + opts.denominator_abs_floor;
  if (std::fabs(den) < eps)
    raise(Errc::DegenerateDenominator, "difficulty " + std::string(i) + ": reference value " +
                                           format_fixed(den, 12) + " too close to zero");
  if (num < 0.0 || den < 0.0)
    detail::warn(opts, "difficulty " + std::string(i) + ": performance values are not all " +
                           "positive (num=" + format_fixed(num, 6) + ", den=" +
                           format_fixed(den, 6) + "); the gap ratio loses its meaning");
  return 1.0 - num / den;
}

/// Per-unit difficulty for every balancing unit, in unit order.
inline DifficultyVector difficulty_vector(const ValidationMatrix& matrix,
                                          const ValidatedTaskGraph& graph,
                                          DifficultyApproach approach,
                                          const MeasureOptions& opts = {}) {
  std::vector<std::string> ids;
  std::vector<double> values;
  ids.reserve(graph.unit_count());
  values.reserve(graph.unit_count());
  for (const BalancingUnit& u : graph.units()) {
    ids.push_back(u.id);
    values.push_back(difficulty(matrix, graph, u.id, approach, opts));
  }
  return DifficultyVector(std::move(ids), std::move(values));
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

inline Json to_json(const ContributionMatrix& cm) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["units"] = cm.unit_ids();
  Json rows = Json::array();
  for (const auto& row : cm.values()) rows.push_back(row);
  j["values"] = std::move(rows);
  return j;
}

inline Json to_json(const DifficultyVector& dv) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["units"] = dv.unit_ids();
  j["values"] = dv.values();
  return j;
}

/// Aligned text rendering of the contribution matrix (rows: source unit i,
/// columns: target unit j).
inline std::string contribution_table(const ContributionMatrix& cm, int precision = 4) {
  std::vector<std::string> header{"i \\ j"};
  for (const auto& id : cm.unit_ids()) header.push_back(id);
  TextTable table(std::move(header));
  for (std::size_t a = 0; a < cm.size(); ++a) {
    std::vector<std::string> row{cm.unit_ids()[a]};
    for (std::size_t b = 0; b < cm.size(); ++b)
      row.push_back(format_fixed(cm.at(a, b), precision));
    table.add_row(std::move(row));
  }
  return table.str();
}

/// Aligned text rendering of the difficulty vector with comparison bars.
inline std::string difficulty_table(const DifficultyVector& dv, int precision = 4) {
  double hi = 0.0;
  for (double v : dv.values()) hi = std::max(hi, std::fabs(v));
  TextTable table({"unit", "difficulty", ""});
  for (std::size_t i = 0; i < dv.size(); ++i)
    table.add_row({dv.unit_ids()[i], format_fixed(dv[i], precision), bar(std::fabs(dv[i]), hi)});
  return table.str();
}

}  // namespace visatb
