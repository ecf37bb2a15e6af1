// Runs the full synthetic pipeline end to end on the default four-task suite
// and prints the report: validation scores from the preparation runs, the
// contribution/difficulty diagnostics, the derived weights, and the final
// per-method comparison. Takes about half a minute. Pass a seed to vary the
// draw (default 0).

#include <cstdlib>
#include <iostream>

#include "visatb/visatb.hpp"

int main(int argc, char** argv) {
  visatb::PipelineConfig cfg = visatb::default_pipeline_config();
  if (argc > 1) cfg.seed = std::strtoull(argv[1], nullptr, 10);
  try {
    const visatb::PipelineResult res = visatb::run_full_pipeline(cfg);
    std::cout << visatb::pipeline_report_text(res);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "bench_demo: " << e.what() << '\n';
    return 1;
  }
}
