#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dflsim/attacks.hpp"
#include "dflsim/dataset.hpp"
#include "dflsim/defenses.hpp"
#include "dflsim/dfl.hpp"
#include "dflsim/metrics.hpp"
#include "dflsim/topology.hpp"

namespace dflsim {

inline constexpr const char* kToolVersion = "dflsim 0.1.0";

// Invalid configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimelineRandomConfig {
  int steps = 10;
  double edge_probability = 0.25;
};

struct CsvSource {
  std::string path;
  std::string schema_path;  // empty: canonical schema
  double test_fraction = 0.25;
};

// One experiment description: data, topology, learning mode, optional
// adversary and defense, and the sweep grid.
struct Scenario {
  std::string name;
  std::uint64_t master_seed = 1;
  std::string output_dir;

  std::optional<SyntheticConfig> synthetic;
  std::optional<CsvSource> csv;

  std::optional<TimelineRandomConfig> random_timeline;
  std::optional<std::string> timeline_file;

  DflConfig dfl;

  std::optional<TargetedAttackSpec> targeted;
  std::optional<BackdoorAttackSpec> backdoor;

  std::optional<ClusterDefenseSpec> cluster_defense;
  std::optional<MadDefenseSpec> mad_defense;

  std::vector<std::uint64_t> seed_axis;
  std::vector<int> k_axis;
  std::vector<double> p_a_axis;
  std::vector<double> ratio_axis;
  std::vector<double> beta_axis;

  bool round_log = false;
  int checkpoint_every = 0;  // rounds; 0 disables checkpoints

  nlohmann::json raw;  // the parsed config, echoed into the manifest
};

Scenario parse_scenario(const nlohmann::json& config);
Scenario load_scenario(const std::filesystem::path& path);

// Effective coordinates of one grid point. Fields irrelevant to the
// configured attack/defense stay empty.
struct GridPoint {
  std::uint64_t seed = 0;
  std::optional<int> k;
  std::optional<double> p_a;
  std::optional<double> selection_ratio;
  std::optional<double> beta;
};

struct PointResult {
  GridPoint point;
  AveragedStats clean;                    // clean-test context
  std::optional<AveragedStats> triggered; // triggered-test context (backdoor)
  std::optional<DetectionReport> detection;
  std::map<std::string, double> timings_s;
  std::vector<RoundStats> history;        // filled when round logging is on
  std::vector<int> evaluated_nodes;
  std::vector<Standardizer> standardizers;
  PoisonRecord poison_record;
  // (round, models) snapshots when checkpointing is enabled
  std::vector<std::pair<int, std::vector<ModelParams>>> checkpoints;
};

struct RunOptions {
  std::string output_dir_override;
  std::optional<std::uint64_t> seed_override;
  int jobs = 1;
};

// Cartesian grid in canonical order: seed, k, p_a, selection_ratio, beta.
std::vector<GridPoint> grid_points(const Scenario& scenario);

PointResult run_grid_point(const Scenario& scenario, const GridPoint& point);

// Executes the grid and writes results.csv, manifest.json and optional
// per-round logs under the output directory.
void run_scenario(const Scenario& scenario, const RunOptions& options);

// Emits (beta, tp, fn) curves for prior/no-prior knowledge crossed with
// the all-22 and reduced-6 feature modes: four CSV files plus a manifest.
void run_defense_sweep(const Scenario& scenario, const RunOptions& options);

struct ComparisonRow {
  nlohmann::json coords;
  std::map<std::string, double> deltas;  // run B minus run A
};

struct Comparison {
  std::vector<std::string> metric_columns;
  std::vector<ComparisonRow> rows;
  std::map<std::string, double> mean_deltas;
};

Comparison compare_runs(const std::filesystem::path& manifest_a,
                        const std::filesystem::path& manifest_b);

void save_comparison_csv(const Comparison& comparison, const std::filesystem::path& path);

std::string config_hash(const nlohmann::json& config);

}  // namespace dflsim
