// visatb — command-line front end for the adaptive task-balancing library.
//
//   visatb plan    --graph g.json --mode standard            run plan + cost
//   visatb weights --graph g.json --matrix m.json ...        C, D, and weights
//   visatb metrics --graph g.json --results r.csv ...        per-method deltas
//   visatb bench   [--config c.json] [--seed N] ...          synthetic pipeline
//
// Every subcommand writes its JSON artifact into the output directory
// (--out, else $VISATB_OUT_DIR, else the current directory) and prints a
// human-readable summary to stdout. Exit status is 0 only if the artifact
// was written.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "visatb/visatb.hpp"

namespace {

using visatb::Json;

std::string resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("VISATB_OUT_DIR"); env && *env) return env;
  return ".";
}

std::string write_artifact(const std::string& out_dir, const std::string& name, const Json& j) {
  std::filesystem::create_directories(out_dir);
  const std::string path = (std::filesystem::path(out_dir) / name).string();
  visatb::save_json(path, j);
  return path;
}

visatb::Temperature resolve_temperature(const std::string& text,
                                        const visatb::StrategyScores& scores,
                                        const visatb::AlphaCoefficients& alpha, bool& was_auto,
                                        bool& attained) {
  if (text == "auto") {
    const visatb::AutoTemperatureResult r = visatb::auto_temperature(scores, alpha);
    was_auto = true;
    attained = r.attained;
    return visatb::Temperature(r.temperature);
  }
  was_auto = false;
  attained = true;
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size())
    visatb::raise(visatb::Errc::InvalidConfig,
                  "--temperature expects a positive number or \"auto\", got \"" + text + "\"");
  return visatb::Temperature(value);  // validates positivity/finiteness
}

int cmd_plan(const std::string& graph_path, const std::string& mode_text, double r_large,
             double r_mini, const std::string& out_dir) {
  const visatb::MeasurementMode mode = visatb::measurement_mode_from_string(mode_text);
  const visatb::ValidatedTaskGraph graph =
      visatb::validate_task_graph(visatb::load_task_graph(graph_path));
  const std::vector<visatb::RunId> runs = visatb::required_runs(graph, mode);
  const double cost = visatb::cost_estimate(graph.unit_count(), r_large, r_mini);

  visatb::TextTable table({"run", "kind"});
  for (const visatb::RunId& run : runs)
    table.add_row({run.label(), std::string(visatb::to_string(run.kind))});
  std::cout << table.str() << '\n';
  std::cout << "units: " << graph.unit_count() << "  runs: " << runs.size() << '\n';
  std::cout << "estimated preparation cost: " << visatb::format_fixed(cost, 2)
            << "x one final training run (" << visatb::format_fixed(r_large, 4) << " + "
            << graph.unit_count() << " x " << visatb::format_fixed(r_mini, 4) << ")\n";

  Json j;
  j["schema_version"] = visatb::kSchemaVersion;
  j["mode"] = std::string(visatb::to_string(mode));
  j["unit_count"] = graph.unit_count();
  Json run_list = Json::array();
  for (const visatb::RunId& run : runs) run_list.push_back(visatb::to_json(run));
  j["runs"] = std::move(run_list);
  j["r_large"] = r_large;
  j["r_mini"] = r_mini;
  j["cost_estimate"] = cost;
  const std::string path = write_artifact(out_dir, "plan.json", j);
  std::cout << "wrote " << path << '\n';
  return 0;
}

int cmd_weights(const std::string& graph_path, const std::string& matrix_path,
                const std::string& mode_text, const std::string& temperature_text,
                const std::string& alpha_text, const std::string& out_dir) {
  const visatb::MeasurementMode mode = visatb::measurement_mode_from_string(mode_text);
  const visatb::ValidatedTaskGraph graph =
      visatb::validate_task_graph(visatb::load_task_graph(graph_path));
  const visatb::ValidationMatrix matrix = visatb::load_validation_matrix(matrix_path);
  const visatb::AlphaCoefficients alpha = visatb::AlphaCoefficients::parse(alpha_text);

  const visatb::ContributionMatrix cm = visatb::contribution_matrix(matrix, graph, mode);
  const visatb::DifficultyVector dv =
      visatb::difficulty_vector(matrix, graph, visatb::difficulty_approach_for(mode));

  const visatb::StrategyScores scores{visatb::outward_contribution(cm),
                                      visatb::inward_contribution(cm), dv.values()};
  bool was_auto = false, attained = true;
  const visatb::Temperature t =
      resolve_temperature(temperature_text, scores, alpha, was_auto, attained);

  const visatb::WeightVector w_out = visatb::lambda_out(cm, t);
  const visatb::WeightVector w_in = visatb::lambda_in(cm, t);
  const visatb::WeightVector w_diff = visatb::lambda_diff(dv, t);
  const visatb::WeightVector w = visatb::integrate(w_out, w_in, w_diff, alpha);

  std::cout << visatb::contribution_table(cm) << '\n';
  std::cout << visatb::difficulty_table(dv) << '\n';
  std::vector<std::string> header{"weights"};
  for (const std::string& id : w.unit_ids()) header.push_back(id);
  visatb::TextTable table(header);
  const auto weight_row = [&](const char* name, const visatb::WeightVector& v) {
    std::vector<std::string> row{name};
    for (const std::string& id : v.unit_ids())
      row.push_back(visatb::format_fixed(v.value_at(id), 4));
    table.add_row(row);
  };
  weight_row("lambda_out", w_out);
  weight_row("lambda_in", w_in);
  weight_row("lambda_D", w_diff);
  weight_row("lambda_VisATB", w);
  std::cout << table.str() << '\n';
  std::cout << "temperature: " << visatb::format_fixed(t.value(), 4)
            << (was_auto ? " (auto)" : "") << (attained ? "" : " (band not attained)") << '\n';

  Json j;
  j["schema_version"] = visatb::kSchemaVersion;
  j["mode"] = std::string(visatb::to_string(mode));
  j["temperature"] = Json{{"value", t.value()}, {"auto", was_auto}, {"attained", attained}};
  j["alpha"] = alpha.as_array();
  j["contribution"] = visatb::to_json(cm);
  j["difficulty"] = visatb::to_json(dv);
  j["lambda_out"] = visatb::to_json(w_out);
  j["lambda_in"] = visatb::to_json(w_in);
  j["lambda_diff"] = visatb::to_json(w_diff);
  j["lambda_visatb"] = visatb::to_json(w);
  const std::string path = write_artifact(out_dir, "weights.json", j);
  std::cout << "wrote " << path << '\n';
  return 0;
}

int cmd_metrics(const std::string& graph_path, const std::string& results_path,
                const std::string& baseline, const std::string& out_dir) {
  const visatb::ValidatedTaskGraph graph =
      visatb::validate_task_graph(visatb::load_task_graph(graph_path));
  const std::vector<visatb::MethodResults> all = visatb::load_results_csv(results_path);
  const visatb::MethodResults& base = visatb::find_method(all, baseline);
  const std::vector<visatb::MethodDelta> deltas = visatb::compare_methods(all, base, graph);

  std::cout << visatb::metrics_report_table(deltas, baseline) << '\n';
  const std::string path =
      write_artifact(out_dir, "metrics.json", visatb::metrics_report_json(deltas, baseline));
  std::cout << "wrote " << path << '\n';
  return 0;
}

int cmd_bench(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& mode_text, const std::string& temperature_text,
              const std::string& alpha_text, bool parallel, const std::string& out_dir) {
  visatb::PipelineConfig cfg = config_path.empty()
                                   ? visatb::default_pipeline_config()
                                   : visatb::pipeline_config_from_json(
                                         visatb::load_json(config_path));
  if (seed) cfg.seed = *seed;
  if (!mode_text.empty()) cfg.mode = visatb::measurement_mode_from_string(mode_text);
  if (!temperature_text.empty()) {
    if (temperature_text == "auto")
      cfg.temperature.reset();
    else
      cfg.temperature = visatb::Temperature(std::stod(temperature_text)).value();
  }
  if (!alpha_text.empty()) cfg.alpha = visatb::AlphaCoefficients::parse(alpha_text).as_array();
  if (parallel) cfg.plan.parallel = true;

  const visatb::PipelineResult res = visatb::run_full_pipeline(cfg);
  std::cout << visatb::pipeline_report_text(res) << '\n';
  const std::string path =
      write_artifact(out_dir, "bench_report.json", visatb::pipeline_report_json(cfg, res));
  std::cout << "wrote " << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visatb — adaptive multi-task weighting and benchmark harness"};
  app.require_subcommand(1);

  std::string graph_path, matrix_path, results_path, config_path;
  std::string mode_text = "standard", temperature_text = "auto", alpha_text = "0.25,0.25,0.5";
  std::string baseline = "stl", out_flag;
  double r_large = 0.25, r_mini = 1.0 / 32.0;
  std::optional<std::uint64_t> seed;
  std::string bench_mode, bench_temperature, bench_alpha;
  bool parallel = false;

  CLI::App* plan = app.add_subcommand("plan", "List preparation runs and their cost");
  plan->add_option("--graph", graph_path, "Task-graph JSON file")->required();
  plan->add_option("--mode", mode_text, "Measurement mode: standard|chat|precise");
  plan->add_option("--r-large", r_large, "Large-subset sampling rate");
  plan->add_option("--r-mini", r_mini, "Mini-subset sampling rate");
  plan->add_option("--out", out_flag, "Output directory (default $VISATB_OUT_DIR or .)");

  CLI::App* weights = app.add_subcommand("weights", "Compute contribution, difficulty, weights");
  weights->add_option("--graph", graph_path, "Task-graph JSON file")->required();
  weights->add_option("--matrix", matrix_path, "Validation-matrix JSON file")->required();
  weights->add_option("--mode", mode_text, "Measurement mode: standard|chat|precise");
  weights->add_option("--temperature", temperature_text, "Softmax temperature or \"auto\"");
  weights->add_option("--alpha", alpha_text, "Integration coefficients \"out,in,diff\"");
  weights->add_option("--out", out_flag, "Output directory (default $VISATB_OUT_DIR or .)");

  CLI::App* metrics = app.add_subcommand("metrics", "Per-task improvement and error deltas");
  metrics->add_option("--graph", graph_path, "Task-graph JSON file")->required();
  metrics->add_option("--results", results_path, "Results CSV (method,task,metric,value)")
      ->required();
  metrics->add_option("--baseline", baseline, "Baseline method label (default stl)");
  metrics->add_option("--out", out_flag, "Output directory (default $VISATB_OUT_DIR or .)");

  CLI::App* bench = app.add_subcommand("bench", "Run the synthetic end-to-end pipeline");
  bench->add_option("--config", config_path, "Pipeline-config JSON (default built-in)");
  bench->add_option("--seed", seed, "Root seed override");
  bench->add_option("--mode", bench_mode, "Measurement mode override");
  bench->add_option("--temperature", bench_temperature, "Temperature override or \"auto\"");
  bench->add_option("--alpha", bench_alpha, "Integration coefficients override");
  bench->add_flag("--parallel", parallel, "Run preparation runs on threads");
  bench->add_option("--out", out_flag, "Output directory (default $VISATB_OUT_DIR or .)");

  CLI11_PARSE(app, argc, argv);

  const std::string out_dir = resolve_out_dir(out_flag);
  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    if (plan->parsed()) return cmd_plan(graph_path, mode_text, r_large, r_mini, out_dir);
    if (weights->parsed())
      return cmd_weights(graph_path, matrix_path, mode_text, temperature_text, alpha_text,
                         out_dir);
    if (metrics->parsed()) return cmd_metrics(graph_path, results_path, baseline, out_dir);
    return cmd_bench(config_path, seed, bench_mode, bench_temperature, bench_alpha, parallel,
                     out_dir);
  } catch (const visatb::Error& e) {
    std::cerr << "visatb " << sub << ": [" << visatb::errc_name(e.code()) << "] " << e.what()
              << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "visatb " << sub << ": " << e.what() << '\n';
    return 1;
  }
}
