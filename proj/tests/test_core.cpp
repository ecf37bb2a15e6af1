#include <catch2/catch_amalgamated.hpp>

#include <optional>
#include <string>
#include <vector>

#include "visatb/core.hpp"

using namespace visatb;

namespace {

// Runs f and reports the Errc it raised, if any.
template <typename F>
std::optional<Errc> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

TaskSpec make_task(std::string id, std::uint64_t size = 100,
                   std::optional<std::string> group = std::nullopt) {
  TaskSpec t;
  t.id = std::move(id);
  t.group = std::move(group);
  t.dataset_size = size;
  t.metrics = {{"quality", MetricDirection::HigherIsBetter}};
  return t;
}

TaskGraph small_graph(std::size_t n) {
  TaskGraph g;
  for (std::size_t i = 0; i < n; ++i) make_task("t" + std::to_string(i)), void();
  for (std::size_t i = 0; i < n; ++i) g.tasks.push_back(make_task("t" + std::to_string(i)));
  return g;
}

}  // namespace

TEST_CASE("per-task validation materializes one unit per task in task order") {
  TaskGraph g = small_graph(3);
  g.tasks[1].dataset_size = 250;
  const ValidatedTaskGraph v = validate_task_graph(g);

  REQUIRE(v.unit_count() == 3);
  REQUIRE(v.units()[0].id == "t0");
  REQUIRE(v.units()[1].id == "t1");
  REQUIRE(v.units()[2].id == "t2");
  REQUIRE(v.units()[1].dataset_size == 250);
  REQUIRE(v.units()[1].task_indices == std::vector<std::size_t>{1});
  REQUIRE(v.unit_of_task("t2") == 2);
  REQUIRE(v.task("t1").dataset_size == 250);
  REQUIRE(v.has_unit("t0"));
  REQUIRE_FALSE(v.has_unit("nope"));
  REQUIRE(code_of([&] { v.unit_index("nope"); }) == Errc::UnknownUnit);
  REQUIRE(code_of([&] { v.task_index("nope"); }) == Errc::UnknownTask);
}

TEST_CASE("per-group validation groups by first appearance and sums sizes") {
  TaskGraph g;
  g.grouping_mode = GroupingMode::PerGroup;
  g.tasks.push_back(make_task("coco", 100, "captioning"));
  g.tasks.push_back(make_task("gqa", 70, "vqa"));
  g.tasks.push_back(make_task("textcaps", 30, "captioning"));
  const ValidatedTaskGraph v = validate_task_graph(g);

  REQUIRE(v.unit_count() == 2);
  REQUIRE(v.units()[0].id == "captioning");
  REQUIRE(v.units()[1].id == "vqa");
  REQUIRE(v.units()[0].dataset_size == 130);
  REQUIRE(v.units()[0].task_indices == std::vector<std::size_t>{0, 2});
  REQUIRE(v.unit_of_task("textcaps") == 0);
  REQUIRE(v.unit_of_task("gqa") == 1);
}

TEST_CASE("validation rejects malformed graphs with specific codes") {
  SECTION("duplicate task id") {
    TaskGraph g = small_graph(2);
    g.tasks[1].id = "t0";
    REQUIRE(code_of([&] { validate_task_graph(g); }) == Errc::DuplicateTaskId);
  }
  SECTION("empty metrics") {
    TaskGraph g = small_graph(2);
    g.tasks[0].metrics.clear();
    REQUIRE(code_of([&] { validate_task_graph(g); }) == Errc::EmptyMetrics);
  }
  SECTION("duplicate metric name") {
    TaskGraph g = small_graph(1);
    g.tasks[0].metrics.push_back({"quality", MetricDirection::LowerIsBetter});
    REQUIRE(code_of([&] { validate_task_graph(g); }) == Errc::InvalidConfig);
  }
  SECTION("primary metric must be listed") {
    TaskGraph g = small_graph(1);
    g.tasks[0].primary_metric = "bleu";
    REQUIRE(code_of([&] { validate_task_graph(g); }) == Errc::InvalidConfig);
  }
  SECTION("missing group label in per-group mode") {
    TaskGraph g = small_graph(2);
    g.grouping_mode = GroupingMode::PerGroup;
    REQUIRE(code_of([&] { validate_task_graph(g); }) == Errc::MissingGroup);
  }
  SECTION("empty task id") {
    TaskGraph g = small_graph(1);
    g.tasks[0].id.clear();
    REQUIRE(code_of([&] { validate_task_graph(g); }) == Errc::InvalidConfig);
  }
}

TEST_CASE("single-unit graphs validate unless balancing is required") {
  const TaskGraph g = small_graph(1);
  REQUIRE(validate_task_graph(g).unit_count() == 1);
  REQUIRE(code_of([&] { validate_task_graph(g, ValidationOptions{true}); }) ==
          Errc::TooFewUnits);
}

TEST_CASE("required runs per mode: counts, order, labels") {
  SECTION("standard needs N+1 runs, mini first") {
    const ValidatedTaskGraph v = validate_task_graph(small_graph(5));
    const std::vector<RunId> runs = required_runs(v, MeasurementMode::Standard);
    REQUIRE(runs.size() == 6);
    REQUIRE(runs[0] == RunId::mini_only());
    REQUIRE(runs[1] == RunId::task_plus_mini("t0"));
    REQUIRE(runs[5] == RunId::task_plus_mini("t4"));
    REQUIRE(runs[0].label() == "mini");
    REQUIRE(runs[1].label() == "t0+mini");
  }
  SECTION("chat-simplified needs 2N+1 runs starting from base") {
    const ValidatedTaskGraph v = validate_task_graph(small_graph(1));
    const std::vector<RunId> runs = required_runs(v, MeasurementMode::ChatSimplified);
    REQUIRE(runs.size() == 3);
    REQUIRE(runs[0] == RunId::base());
    REQUIRE(runs[1] == RunId::task_only("t0"));
    REQUIRE(runs[2] == RunId::mini_of_task("t0"));
    REQUIRE(runs[0].label() == "base");
    REQUIRE(runs[1].label() == "t0");
    REQUIRE(runs[2].label() == "mini(t0)");
  }
  SECTION("precise-difficulty appends per-unit mini runs to the standard set") {
    const ValidatedTaskGraph v = validate_task_graph(small_graph(3));
    const std::vector<RunId> runs = required_runs(v, MeasurementMode::PreciseDifficulty);
    REQUIRE(runs.size() == 7);
    REQUIRE(runs[0] == RunId::mini_only());
    REQUIRE(runs[3] == RunId::task_plus_mini("t2"));
    REQUIRE(runs[4] == RunId::mini_of_task("t0"));
    REQUIRE(runs[6] == RunId::mini_of_task("t2"));
  }
  SECTION("run list is deterministic") {
    const ValidatedTaskGraph v = validate_task_graph(small_graph(4));
    REQUIRE(required_runs(v, MeasurementMode::Standard) ==
            required_runs(v, MeasurementMode::Standard));
  }
}

TEST_CASE("measurement mode strings round-trip") {
  for (MeasurementMode m : {MeasurementMode::Standard, MeasurementMode::ChatSimplified,
                            MeasurementMode::PreciseDifficulty})
    REQUIRE(measurement_mode_from_string(to_string(m)) == m);
  REQUIRE(code_of([] { measurement_mode_from_string("turbo"); }) == Errc::SchemaError);
}

TEST_CASE("validation matrix stores, overwrites, and reports gaps") {
  ValidationMatrix m;
  const RunId mini = RunId::mini_only();
  m.set(mini, "t0", "quality", 0.5);
  REQUIRE(m.contains(mini, "t0", "quality"));
  REQUIRE(m.at(mini, "t0", "quality") == 0.5);

  m.set(mini, "t0", "quality", 0.75);  // overwrite, no duplicate entry
  REQUIRE(m.size() == 1);
  REQUIRE(m.at(mini, "t0", "quality") == 0.75);

  REQUIRE(code_of([&] { m.at(mini, "t1", "quality"); }) == Errc::MissingEntry);
  REQUIRE(code_of([&] { m.set(mini, "t0", "quality", std::nan("")); }) ==
          Errc::NonFiniteValue);

  const ValidatedTaskGraph v = validate_task_graph(small_graph(2));
  const std::vector<RunId> runs = required_runs(v, MeasurementMode::Standard);
  const auto gaps = m.missing_entries(v, runs);
  // 3 runs x 2 tasks x 1 metric = 6 required, one of which is present.
  REQUIRE(gaps.size() == 5);
  for (const auto& gap : gaps)
    REQUIRE_FALSE((gap.run == mini && gap.task == "t0" && gap.metric == "quality"));
}

TEST_CASE("weight vectors validate entries but never a sum constraint") {
  REQUIRE_NOTHROW(WeightVector(WeightStrategy::Manual, {"a", "b"}, {5.0, 9.0}));

  REQUIRE(code_of([] { WeightVector(WeightStrategy::Manual, {"a"}, {0.0}); }) ==
          Errc::NonFiniteValue);
  REQUIRE(code_of([] { WeightVector(WeightStrategy::Manual, {"a"}, {-1.0}); }) ==
          Errc::NonFiniteValue);
  REQUIRE(code_of([] {
            WeightVector(WeightStrategy::Manual, {"a"},
                         {std::numeric_limits<double>::infinity()});
          }) == Errc::NonFiniteValue);
  REQUIRE(code_of([] { WeightVector(WeightStrategy::Manual, {"a", "a"}, {1.0, 1.0}); }) ==
          Errc::InvalidConfig);
  REQUIRE(code_of([] { WeightVector(WeightStrategy::Manual, {"a"}, {1.0, 2.0}); }) ==
          Errc::InvalidConfig);
  REQUIRE(code_of([] { WeightVector(WeightStrategy::Manual, {}, {}); }) ==
          Errc::InvalidConfig);

  const WeightVector ones = WeightVector::ones({"x", "y", "z"});
  REQUIRE(ones.size() == 3);
  REQUIRE(ones.sum() == 3.0);
  REQUIRE(ones.value_at("y") == 1.0);
  REQUIRE(code_of([&] { ones.value_at("w"); }) == Errc::MissingWeight);
  REQUIRE_FALSE(ones.temperature().has_value());
  REQUIRE_FALSE(ones.alpha().has_value());
}

TEST_CASE("task graph JSON round-trips exactly") {
  TaskGraph g;
  g.grouping_mode = GroupingMode::PerGroup;
  TaskSpec t = make_task("gqa", 72000, "vqa");
  t.metrics.push_back({"latency", MetricDirection::LowerIsBetter});
  t.primary_metric = "quality";
  g.tasks.push_back(t);
  g.tasks.push_back(make_task("coco", 120, "captioning"));

  const Json j = to_json(g);
  const TaskGraph back = task_graph_from_json(j);
  REQUIRE(back.grouping_mode == g.grouping_mode);
  REQUIRE(back.tasks == g.tasks);
  REQUIRE(to_json(back).dump() == j.dump());  // stable serialization
}

TEST_CASE("validation matrix and weight vector JSON round-trips") {
  ValidationMatrix m;
  m.set(RunId::mini_only(), "a", "quality", 0.25);
  m.set(RunId::task_plus_mini("a"), "a", "quality", 0.5);
  m.set(RunId::base(), "b", "quality", -1.5);
  m.set(RunId::mini_of_task("b"), "b", "quality", 0.125);
  const ValidationMatrix m2 = validation_matrix_from_json(to_json(m));
  REQUIRE(m2 == m);

  WeightVector w(WeightStrategy::Integrated, {"a", "b"}, {1.25, 0.75});
  w.set_temperature(2.5);
  w.set_alpha({0.25, 0.25, 0.5});
  const WeightVector w2 = weight_vector_from_json(to_json(w));
  REQUIRE(w2.strategy() == WeightStrategy::Integrated);
  REQUIRE(w2.unit_ids() == w.unit_ids());
  REQUIRE(w2.values() == w.values());
  REQUIRE(w2.temperature() == w.temperature());
  REQUIRE(w2.alpha() == w.alpha());
}

TEST_CASE("schema violations carry SchemaError") {
  SECTION("missing schema_version") {
    Json j = to_json(TaskGraph{});
    j.erase("schema_version");
    REQUIRE(code_of([&] { task_graph_from_json(j); }) == Errc::SchemaError);
  }
  SECTION("wrong schema_version") {
    Json j = to_json(TaskGraph{});
    j["schema_version"] = 999;
    REQUIRE(code_of([&] { task_graph_from_json(j); }) == Errc::SchemaError);
  }
  SECTION("wrong field type") {
    TaskGraph g = small_graph(1);
    Json j = to_json(g);
    j["tasks"][0]["dataset_size"] = "lots";
    REQUIRE(code_of([&] { task_graph_from_json(j); }) == Errc::SchemaError);
  }
  SECTION("unit-scoped run id without a task") {
    Json j;
    j["kind"] = "task_plus_mini";
    REQUIRE(code_of([&] { run_id_from_json(j); }) == Errc::SchemaError);
  }
  SECTION("unreadable file is IoError") {
    REQUIRE(code_of([] { load_json("/nonexistent/visatb.json"); }) == Errc::IoError);
  }
}
