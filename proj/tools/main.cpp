#include <iostream>

#include "CLI11.hpp"
#include "wc/verify.hpp"
#include "wc/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"warpcert: warped-product constructions and curvature certificates"};
  std::string scenario;
  wc::RunOptions opt;
  std::string out = ".";
  bool to_stdout = false;
  app.add_option("scenario", scenario, "scenario JSON file")->required();
  app.add_option("--out", out, "output directory");
  app.add_option("--threads", opt.threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
  app.add_option("--grid-depth", opt.grid_depth, "override the refinement depth of every grid")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--json", to_stdout, "print the report to stdout");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  opt.out_dir = out;

  const wc::RunResult rr = wc::run_scenario_file(scenario, opt);
  if (to_stdout) std::cout << wc::dump_json(rr.report) << "\n";
  if (rr.exit_code >= 2) std::cerr << wc::dump_json(rr.report["error"]) << "\n";
  return rr.exit_code;
}
