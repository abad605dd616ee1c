#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dflsim/scenario.hpp"

using namespace dflsim;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "name": "unit",
    "master_seed": 1,
    "data": {"synthetic": {"node_count": 5, "with_data_count": 5, "samples_per_node": 60,
                            "class_separation": 4.0}},
    "timeline": {"random": {"steps": 4, "edge_probability": 0.4}},
    "dfl": {"rounds": 5, "mode": "dfl"}
  })");
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("unknown fields are rejected with their path") {
  auto config = small_config();
  config["dfl"]["learning_rate"] = 0.1;  // belongs under dfl.train
  try {
    parse_scenario(config);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("dfl.learning_rate") != std::string::npos);
  }
}

TEST_CASE("config validation catches structural mistakes") {
  auto config = small_config();
  config.erase("data");
  CHECK_THROWS_AS(parse_scenario(config), ConfigError);

  config = small_config();
  config["data"]["veremi_csv"] = {{"path", "x.csv"}};
  CHECK_THROWS_AS(parse_scenario(config), ConfigError);  // two data sources

  config = small_config();
  config["sweep"] = {{"attack.p_a", {0.0, 1.0}}};
  CHECK_THROWS_AS(parse_scenario(config), ConfigError);  // sweep without attack

  config = small_config();
  config["attack"] = {{"targeted", {{"p_a", 1.5}}}};
  CHECK_THROWS_AS(parse_scenario(config), ConfigError);  // out-of-range p_a

  config = small_config();
  config["defense"] = {{"cluster", {{"beta", 2.0}}}};
  CHECK_THROWS_AS(parse_scenario(config), ConfigError);  // beta outside [0.5, 1.5]
}

TEST_CASE("grid points expand in canonical order") {
  auto config = small_config();
  config["attack"] = {{"targeted", {{"selection", {{"metric", "degree"}, {"k", 2}}}, {"p_a", 0.5}}}};
  config["sweep"] = {{"seed", {1, 2}}, {"attack.p_a", {0.0, 1.0}}};
  const Scenario s = parse_scenario(config);
  const auto points = grid_points(s);
  REQUIRE(points.size() == 4);
  CHECK(points[0].seed == 1);
  CHECK(*points[0].p_a == 0.0);
  CHECK(points[1].seed == 1);
  CHECK(*points[1].p_a == 1.0);
  CHECK(points[2].seed == 2);
  CHECK_FALSE(points[2].k.has_value());  // fixed k is config, not a coordinate
}

TEST_CASE("run_scenario writes results, manifest and round logs deterministically") {
  TempDir dir("dflsim_scn_run");
  auto config = small_config();
  config["round_log"] = true;
  config["attack"] = {{"targeted", {{"selection", {{"metric", "all"}}}, {"p_a", 0.0}}}};
  config["sweep"] = {{"attack.p_a", {0.0, 1.0}}};
  const Scenario s = parse_scenario(config);

  RunOptions options;
  options.output_dir_override = (dir.path / "a").string();
  run_scenario(s, options);
  CHECK(fs::exists(dir.path / "a" / "results.csv"));
  CHECK(fs::exists(dir.path / "a" / "manifest.json"));
  CHECK(fs::exists(dir.path / "a" / "rounds_0.csv"));
  CHECK(fs::exists(dir.path / "a" / "rounds_1.csv"));

  options.output_dir_override = (dir.path / "b").string();
  options.jobs = 2;  // parallel execution must not change any byte
  run_scenario(s, options);
  CHECK(slurp(dir.path / "a" / "results.csv") == slurp(dir.path / "b" / "results.csv"));
  CHECK(slurp(dir.path / "a" / "rounds_0.csv") == slurp(dir.path / "b" / "rounds_0.csv"));

  // Coordinates before metrics in the header; p_a carried per row.
  std::ifstream results(dir.path / "a" / "results.csv");
  std::string header;
  std::getline(results, header);
  CHECK(header.rfind("seed,p_a,", 0) == 0);
  int rows = 0;
  std::string line;
  while (std::getline(results, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("checkpoints are written at the configured interval") {
  TempDir dir("dflsim_scn_ckpt");
  auto config = small_config();
  config["checkpoint_every"] = 3;
  const Scenario s = parse_scenario(config);
  RunOptions options;
  options.output_dir_override = dir.path.string();
  run_scenario(s, options);
  CHECK(fs::exists(dir.path / "checkpoint_0_round_3.json"));
  CHECK(fs::exists(dir.path / "checkpoint_0_round_5.json"));  // final round snapshot
}

TEST_CASE("backdoor scenario reports both test contexts") {
  TempDir dir("dflsim_scn_trj");
  auto config = small_config();
  config["data"]["synthetic"]["position_cluster_std"] = 400.0;
  config["attack"] = {{"backdoor",
                       {{"trigger", {0.0, 0.0}},
                        {"selection_ratio", 0.2},
                        {"selection", {{"metric", "all"}}}}}};
  const Scenario s = parse_scenario(config);
  const auto points = grid_points(s);
  REQUIRE(points.size() == 1);
  const PointResult r = run_grid_point(s, points[0]);
  REQUIRE(r.triggered.has_value());
  CHECK(r.triggered->p_bm >= 0.0);
  CHECK(r.triggered->p_bm <= 1.0);
  CHECK(r.clean.pooled.total() > 0);
}

TEST_CASE("defense sweep emits four curve files") {
  TempDir dir("dflsim_scn_sweep");
  auto config = small_config();
  config["attack"] = {{"targeted", {{"selection", {{"metric", "all"}}}, {"p_a", 1.0}}}};
  config["defense"] = {{"cluster", {{"prior_knowledge", true}}}};
  config["sweep"] = {{"defense.beta", {0.5, 1.0, 1.5}}};
  const Scenario s = parse_scenario(config);
  RunOptions options;
  options.output_dir_override = (dir.path / "a").string();
  run_defense_sweep(s, options);
  options.output_dir_override = (dir.path / "b").string();
  run_defense_sweep(s, options);

  for (const std::string file : {"curve_prior_all22.csv", "curve_noprior_all22.csv",
                                 "curve_prior_reduced6.csv", "curve_noprior_reduced6.csv"}) {
    CAPTURE(file);
    REQUIRE(fs::exists(dir.path / "a" / file));
    std::ifstream in(dir.path / "a" / file);
    std::string header;
    std::getline(in, header);
    CHECK(header == "beta,tp,fn");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);
    CHECK(slurp(dir.path / "a" / file) == slurp(dir.path / "b" / file));  // byte-identical rerun
  }
}

TEST_CASE("compare_runs aligns grids and reports deltas") {
  TempDir dir("dflsim_scn_cmp");
  auto config = small_config();
  config["attack"] = {{"targeted", {{"selection", {{"metric", "all"}}}, {"p_a", 0.5}}}};
  config["sweep"] = {{"attack.p_a", {0.0, 1.0}}};
  const Scenario s = parse_scenario(config);

  RunOptions options;
  options.output_dir_override = (dir.path / "a").string();
  run_scenario(s, options);
  options.output_dir_override = (dir.path / "b").string();
  run_scenario(s, options);

  const Comparison cmp = compare_runs(dir.path / "a" / "manifest.json",
                                      dir.path / "b" / "manifest.json");
  REQUIRE(cmp.rows.size() == 2);
  for (const auto& [name, delta] : cmp.mean_deltas) CHECK(delta == 0.0);  // identical runs

  save_comparison_csv(cmp, dir.path / "comparison.csv");
  CHECK(fs::exists(dir.path / "comparison.csv"));

  // Mismatched grids raise an error naming the axis.
  auto other = config;
  other["sweep"]["attack.p_a"] = {0.0, 0.5};
  options.output_dir_override = (dir.path / "c").string();
  run_scenario(parse_scenario(other), options);
  try {
    compare_runs(dir.path / "a" / "manifest.json", dir.path / "c" / "manifest.json");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("p_a") != std::string::npos);
  }
}

TEST_CASE("bundled scenario files parse") {
  const fs::path dir = DFLSIM_SCENARIO_DIR;
  int parsed = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    if (entry.path().filename().string().find("schema") != std::string::npos) continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_scenario(entry.path()));
    ++parsed;
  }
  CHECK(parsed >= 8);
}

TEST_CASE("cli exit codes: 0 ok, 2 config error") {
  TempDir dir("dflsim_cli");
  const fs::path good = dir.path / "good.json";
  {
    std::ofstream out(good);
    auto config = small_config();
    config["dfl"]["rounds"] = 2;
    out << config.dump();
  }
  const fs::path bad = dir.path / "bad.json";
  {
    std::ofstream out(bad);
    auto config = small_config();
    config["typo_field"] = 1;
    out << config.dump();
  }
  const std::string cli = DFLSIM_CLI_PATH;
  const std::string out_dir = (dir.path / "out").string();
  const int ok = std::system((cli + " run " + good.string() + " --output-dir " + out_dir +
                              " > /dev/null 2>&1")
                                 .c_str());
  CHECK(WEXITSTATUS(ok) == 0);
  CHECK(fs::exists(dir.path / "out" / "results.csv"));

  const int config_error =
      std::system((cli + " run " + bad.string() + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(config_error) == 2);

  const int missing =
      std::system((cli + " run " + (dir.path / "none.json").string() + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(missing) == 2);

  // Runtime failure: timeline file that does not exist.
  const fs::path broken = dir.path / "broken.json";
  {
    std::ofstream out(broken);
    auto config = small_config();
    config["timeline"] = {{"file", (dir.path / "missing_timeline.txt").string()}};
    out << config.dump();
  }
  const int runtime_error =
      std::system((cli + " run " + broken.string() + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(runtime_error) == 1);
}
