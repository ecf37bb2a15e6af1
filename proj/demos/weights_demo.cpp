// Loads the bundled three-task example (task graph + validation matrix),
// derives the contribution matrix, difficulty vector, and all weight vectors,
// and prints them. Pass a fixture directory to override the default lookup.

#include <iostream>
#include <string>

#include "visatb/visatb.hpp"

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data/fixtures";
  try {
    const auto graph = visatb::validate_task_graph(
        visatb::load_task_graph(dir + "/demo_graph.json"));
    const auto matrix = visatb::load_validation_matrix(dir + "/demo_matrix.json");

    const auto cm = visatb::contribution_matrix(matrix, graph, visatb::MeasurementMode::Standard);
    const auto dv = visatb::difficulty_vector(matrix, graph,
                                              visatb::DifficultyApproach::RealReuse);

    std::cout << visatb::contribution_table(cm) << '\n'
              << visatb::difficulty_table(dv) << '\n';

    const visatb::AlphaCoefficients alpha(0.25, 0.25, 0.5);
    const visatb::StrategyScores scores{visatb::outward_contribution(cm),
                                        visatb::inward_contribution(cm), dv.values()};
    const auto auto_t = visatb::auto_temperature(scores, alpha);
    const visatb::Temperature t(auto_t.temperature);
    std::cout << "auto temperature: " << visatb::format_fixed(t.value(), 4)
              << (auto_t.attained ? "" : " (band not attained)") << "\n\n";

    const auto w_out = visatb::lambda_out(cm, t);
    const auto w_in = visatb::lambda_in(cm, t);
    const auto w_diff = visatb::lambda_diff(dv, t);
    const auto w = visatb::integrate(w_out, w_in, w_diff, alpha);

    std::vector<std::string> header{"weights"};
    for (const auto& id : w.unit_ids()) header.push_back(id);
    visatb::TextTable table(header);
    for (const auto& [name, v] :
         {std::pair<const char*, const visatb::WeightVector*>{"lambda_out", &w_out},
          {"lambda_in", &w_in},
          {"lambda_D", &w_diff},
          {"lambda_VisATB", &w}}) {
      std::vector<std::string> row{name};
      for (const auto& id : v->unit_ids())
        row.push_back(visatb::format_fixed(v->value_at(id), 4));
      table.add_row(row);
    }
    std::cout << table.str();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "weights_demo: " << e.what() << '\n';
    std::cerr << "hint: run from the repository root or pass the fixture directory\n";
    return 1;
  }
}
