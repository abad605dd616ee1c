#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dflsim/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

dflsim::RunOptions make_options(const std::string& output_dir, std::optional<std::uint64_t> seed,
                                int jobs) {
  dflsim::RunOptions options;
  options.output_dir_override = output_dir;
  options.seed_override = seed;
  options.jobs = jobs;
  return options;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic DFL attack/defense experiment runner"};
  app.set_version_flag("--version", dflsim::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "scenario config file (JSON)")->required();
    cmd->add_option("--output-dir", output_dir, "override the scenario's output directory");
    cmd->add_option("--seed", seed, "override the master seed");
    cmd->add_option("--jobs", jobs, "parallel grid points")->check(CLI::PositiveNumber);
  };

  CLI::App* run = app.add_subcommand("run", "run a scenario over its sweep grid");
  add_common(run);
  CLI::App* sweep =
      app.add_subcommand("sweep", "emit clustering-defense TP/FN curves over the beta grid");
  add_common(sweep);

  CLI::App* compare = app.add_subcommand("compare", "compare two run manifests");
  std::string manifest_a, manifest_b;
  compare->add_option("manifest-a", manifest_a, "baseline manifest.json")->required();
  compare->add_option("manifest-b", manifest_b, "comparison manifest.json")->required();
  compare->add_option("--output-dir", output_dir, "directory for comparison.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) {
      const dflsim::Scenario scenario = dflsim::load_scenario(config_path);
      dflsim::run_scenario(scenario, make_options(output_dir, seed, jobs));
      return kExitOk;
    }
    if (sweep->parsed()) {
      const dflsim::Scenario scenario = dflsim::load_scenario(config_path);
      dflsim::run_defense_sweep(scenario, make_options(output_dir, seed, jobs));
      return kExitOk;
    }
    if (compare->parsed()) {
      const dflsim::Comparison cmp = dflsim::compare_runs(manifest_a, manifest_b);
      const std::filesystem::path dir = output_dir.empty() ? "." : output_dir;
      std::filesystem::create_directories(dir);
      dflsim::save_comparison_csv(cmp, dir / "comparison.csv");
      std::cout << "wrote " << (dir / "comparison.csv").string() << "\n";
      for (const auto& name : cmp.metric_columns)
        std::cout << "mean delta " << name << " = " << cmp.mean_deltas.at(name) << "\n";
      return kExitOk;
    }
  } catch (const dflsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
