// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core.hpp"
#include "table.hpp"

namespace visatb {

// ---------------------------------------------------------------------------
// Method results
// ---------------------------------------------------------------------------

/// Final test values of one method: a (task, metric) → value map plus the
/// method's label. Values are stored raw; direction handling happens in the
/// improvement computation.
class MethodResults {
 public:
  explicit MethodResults(std::string method) : method_(std::move(method)) {
    if (method_.empty()) raise(Errc::InvalidConfig, "empty method label");
  }

  const std::string& method() const { return method_; }

  void set(std::string_view task, std::string_view metric, double value) {
    if (!std::isfinite(value))
      raise(Errc::NonFiniteValue, "non-finite result for method \"" + method_ + "\" task=" +
                                      std::string(task) + " metric=" + std::string(metric));
    values_[{std::string(task), std::string(metric)}] = value;
  }

  bool contains(std::string_view task, std::string_view metric) const {
    return values_.find(std::pair(std::string(task), std::string(metric))) != values_.end();
  }

  double at(std::string_view task, std::string_view metric) const {
    auto it = values_.find(std::pair(std::string(task), std::string(metric)));
    if (it == values_.end())
      raise(Errc::MissingEntry, "method \"" + method_ + "\" has no value for task=" +
                                    std::string(task) + " metric=" + std::string(metric));
    return it->second;
  }

  std::size_t size() const { return values_.size(); }

  /// Checks exact coverage: every (task, metric) of the graph present and
  /// nothing else.
  void validate_against(const ValidatedTaskGraph& graph) const {
    std::size_t expected = 0;
    for (const TaskSpec& t : graph.tasks()) {
      expected += t.metrics.size();
      for (const MetricSpec& m : t.metrics)
        if (!contains(t.id, m.name))
          raise(Errc::MissingEntry, "method \"" + method_ + "\" lacks task=" + t.id +
                                        " metric=" + m.name);
    }
    if (values_.size() == expected) return;
    for (const auto& [key, value] : values_) {
      if (!graph.has_task(key.first))
        raise(Errc::UnknownTask, "method \"" + method_ + "\" covers unknown task \"" +
                                     key.first + "\"");
      bool known = false;
      for (const MetricSpec& m : graph.task(key.first).metrics)
        if (m.name == key.second) known = true;
      if (!known)
        raise(Errc::InvalidConfig, "method \"" + method_ + "\" covers unknown metric \"" +
                                       key.second + "\" of task \"" + key.first + "\"");
    }
  }

 private:
  std::string method_;
  std::map<std::pair<std::string, std::string>, double> values_;
};

// ---------------------------------------------------------------------------
// Improvement metrics
// ---------------------------------------------------------------------------

/// Signed relative improvement of one task, averaged over its metrics and
/// direction-corrected (a drop in a lower-is-better metric counts as
/// improvement):
///   I = (1/K) Σ_m ± (M_eval − M_base)/M_base.
/// Returned as a fraction; multiply by 100 for percent.
inline double per_task_improvement(const MethodResults& evaluated, const MethodResults& baseline,
                                   const TaskSpec& task) {
  double sum = 0.0;
  for (const MetricSpec& m : task.metrics) {
    const double base = baseline.at(task.id, m.name);
    if (base == 0.0)
      raise(Errc::ZeroBaseline, "baseline \"" + baseline.method() + "\" is zero for task=" +
                                    task.id + " metric=" + m.name);
    const double rel = (evaluated.at(task.id, m.name) - base) / base;
    sum += m.direction == MetricDirection::LowerIsBetter ? -rel : rel;
  }
  return sum / static_cast<double>(task.metrics.size());
}

/// Mean per-task improvement over the graph's tasks (fraction).
inline double delta_I(const MethodResults& evaluated, const MethodResults& baseline,
                      const ValidatedTaskGraph& graph) {
  double sum = 0.0;
  for (const TaskSpec& t : graph.tasks()) sum += per_task_improvement(evaluated, baseline, t);
  return sum / static_cast<double>(graph.tasks().size());
}

/// Mean per-task error: the magnitude of negative improvements only,
///   (1/N) Σ max(0, −I_i)  (fraction). Zero exactly when no task regresses.
inline double delta_E(const MethodResults& evaluated, const MethodResults& baseline,
                      const ValidatedTaskGraph& graph) {
  double sum = 0.0;
  for (const TaskSpec& t : graph.tasks())
    sum += std::max(0.0, -per_task_improvement(evaluated, baseline, t));
  return sum / static_cast<double>(graph.tasks().size());
}

/// Zero-shot improvement: same arithmetic as delta_I but measured on a
/// held-out task set with the equal-weighting run as the reference.
inline double delta_I_zero(const MethodResults& evaluated, const MethodResults& reference_ew,
                           const ValidatedTaskGraph& zero_shot_graph) {
  return delta_I(evaluated, reference_ew, zero_shot_graph);
}

// ---------------------------------------------------------------------------
// CSV ingest
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(',', pos);
    fields.push_back(trim(line.substr(pos, next == std::string::npos ? next : next - pos)));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return fields;
}

}  // namespace detail

/// Parses method results from CSV with header "method,task,metric,value".
/// '#' lines and blank lines are skipped; duplicate (method, task, metric)
/// rows are rejected. Methods are returned in first-appearance order.
inline std::vector<MethodResults> parse_results_csv(std::istream& in) {
  std::vector<MethodResults> methods;
  std::map<std::string, std::size_t> index;
  std::string line;
  bool saw_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    auto fields = detail::split_csv_line(stripped);
    if (!saw_header) {
      if (fields != std::vector<std::string>{"method", "task", "metric", "value"})
        raise(Errc::SchemaError,
              "results CSV must start with header \"method,task,metric,value\"");
      saw_header = true;
      continue;
    }
    if (fields.size() != 4)
      raise(Errc::SchemaError, "results CSV line " + std::to_string(line_no) +
                                   ": expected 4 fields, got " + std::to_string(fields.size()));
    const std::string &method = fields[0], &task = fields[1], &metric = fields[2];
    if (method.empty() || task.empty() || metric.empty())
      raise(Errc::SchemaError, "results CSV line " + std::to_string(line_no) + ": empty field");
    char* end = nullptr;
    const double value = std::strtod(fields[3].c_str(), &end);
    if (end == fields[3].c_str() || *end != '\0')
      raise(Errc::SchemaError, "results CSV line " + std::to_string(line_no) +
                                   ": cannot parse value \"" + fields[3] + "\"");
    auto [it, inserted] = index.emplace(method, methods.size());
    if (inserted) methods.emplace_back(method);
    MethodResults& r = methods[it->second];
    if (r.contains(task, metric))
      raise(Errc::SchemaError, "results CSV line " + std::to_string(line_no) +
                                   ": duplicate row for (" + method + ", " + task + ", " +
                                   metric + ")");
    r.set(task, metric, value);
  }
  if (!saw_header) raise(Errc::SchemaError, "results CSV is empty");
  return methods;
}

inline std::vector<MethodResults> load_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::IoError, "cannot open \"" + path + "\" for reading");
  return parse_results_csv(in);
}

/// The results of one method by label; MissingEntry when absent.
inline const MethodResults& find_method(const std::vector<MethodResults>& all,
                                        std::string_view label) {
  for (const MethodResults& r : all)
    if (r.method() == label) return r;
  raise(Errc::MissingEntry, "no method \"" + std::string(label) + "\" in results");
}

// ---------------------------------------------------------------------------
// Comparison report
// ---------------------------------------------------------------------------

/// ΔI/ΔE of one method against the chosen baseline (fractions), with the
/// per-task breakdown.
struct MethodDelta {
  std::string method;
  double delta_i = 0.0;
  double delta_e = 0.0;
  std::vector<std::pair<std::string, double>> per_task;  ///< task id → I_i
};

/// ΔI/ΔE for every method (baseline included — its row is exactly zero).
/// Validates exact task/metric coverage of every method against the graph.
inline std::vector<MethodDelta> compare_methods(const std::vector<MethodResults>& all,
                                                const MethodResults& baseline,
                                                const ValidatedTaskGraph& graph) {
  baseline.validate_against(graph);
  std::vector<MethodDelta> deltas;
  deltas.reserve(all.size());
  for (const MethodResults& r : all) {
    r.validate_against(graph);
    MethodDelta d;
    d.method = r.method();
    for (const TaskSpec& t : graph.tasks()) {
      const double i = per_task_improvement(r, baseline, t);
      d.per_task.emplace_back(t.id, i);
      d.delta_i += i;
      d.delta_e += std::max(0.0, -i);
    }
    d.delta_i /= static_cast<double>(graph.tasks().size());
    d.delta_e /= static_cast<double>(graph.tasks().size());
    deltas.push_back(std::move(d));
  }
  return deltas;
}

inline Json metrics_report_json(const std::vector<MethodDelta>& deltas,
                                std::string_view baseline_label) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["baseline"] = std::string(baseline_label);
  Json methods = Json::array();
  for (const MethodDelta& d : deltas) {
    Json jm;
    jm["method"] = d.method;
    jm["delta_i_percent"] = 100.0 * d.delta_i;
    jm["delta_e_percent"] = 100.0 * d.delta_e;
    Json per_task;
    for (const auto& [task, i] : d.per_task) per_task[task] = 100.0 * i;
    jm["per_task_improvement_percent"] = std::move(per_task);
    methods.push_back(std::move(jm));
  }
  j["methods"] = std::move(methods);
  return j;
}

inline std::string metrics_report_table(const std::vector<MethodDelta>& deltas,
                                        std::string_view baseline_label) {
  TextTable table({"method", "dI%", "dE%"});
  for (const MethodDelta& d : deltas)
    table.add_row({d.method, format_fixed(100.0 * d.delta_i, 2),
                   format_fixed(100.0 * d.delta_e, 2)});
  std::string out = "improvement vs baseline \"" + std::string(baseline_label) + "\"\n";
  out += table.str();
  return out;
}

}  // namespace visatb
