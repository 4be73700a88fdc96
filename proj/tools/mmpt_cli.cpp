#include "mmpt/scenario.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdio>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Parallel transport along test plans on discretized metric measure spaces"};
  app.require_subcommand(1);

  std::string run_config, out_dir;
  int threads = 0;
  std::uint64_t seed = 0;

  CLI::App* run = app.add_subcommand("run", "Run a scenario and write report.json + CSV tables");
  run->add_option("--config", run_config, "Config file path or builtin scenario name")->required();
  run->add_option("--out", out_dir, "Output directory (overrides config and MMPT_OUT_DIR)");
  run->add_option("--threads", threads, "Worker threads for the linear algebra backend");
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Override the plan sampling seed");

  CLI::App* list = app.add_subcommand("list-scenarios", "List builtin scenario names");

  std::string validate_config;
  CLI::App* validate = app.add_subcommand("validate", "Parse and validate a config, no solve");
  validate->add_option("--config", validate_config, "Config file path or builtin scenario name")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const std::string& name : mmpt::builtin_scenarios()) std::cout << name << "\n";
      return 0;
    }
    if (validate->parsed()) {
      mmpt::validate_scenario(mmpt::load_config(validate_config));
      std::cout << "config is valid\n";
      return 0;
    }
    if (threads > 0) Eigen::setNbThreads(threads);
    mmpt::ScenarioConfig config = mmpt::load_config(run_config);
    if (seed_opt->count() > 0) config.seed = seed;
    const mmpt::RunReport report = mmpt::run_scenario(config, out_dir);
    for (const mmpt::SuiteRow& row : report.suite)
      std::printf("%-18s %14.6e  (max %10.3e)  %s\n", row.name.c_str(), row.value, row.threshold,
                  row.pass ? "pass" : "FAIL");
    std::cout << (report.all_pass ? "all checks passed" : "checks FAILED") << "\n";
    return report.all_pass ? 0 : 1;
  } catch (const mmpt::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const mmpt::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 3;
  } catch (const mmpt::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
