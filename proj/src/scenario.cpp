#include "dflsim/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "dflsim/rng.hpp"

namespace dflsim {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path.empty() ? what : path + ": " + what);
}

void check_known_fields(const json& j, const std::string& path,
                        std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& item : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* name) {
          return item.key() == name;
        }) == allowed.end())
      fail("", "unknown field: " + join_path(path, item.key()));
  }
}

const json* maybe(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

std::uint64_t get_seed(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !j.is_number_integer()) fail(path, "expected an integer seed");
  return j.get<std::uint64_t>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

template <typename T, typename Getter>
std::vector<T> get_list(const json& j, const std::string& path, Getter getter) {
  if (!j.is_array()) fail(path, "expected a list");
  std::vector<T> out;
  std::size_t i = 0;
  for (const auto& item : j) out.push_back(getter(item, path + "[" + std::to_string(i++) + "]"));
  return out;
}

NodeSelection parse_selection(const json& j, const std::string& path) {
  check_known_fields(j, path, {"metric", "k", "nodes"});
  NodeSelection sel;
  const std::string metric =
      maybe(j, "metric") ? get_string(*maybe(j, "metric"), path + ".metric") : "all";
  if (metric == "degree") {
    sel.metric = SelectionMetric::kDegree;
  } else if (metric == "component_size") {
    sel.metric = SelectionMetric::kComponentSize;
  } else if (metric == "connected_ratio") {
    sel.metric = SelectionMetric::kConnectedRatio;
  } else if (metric == "explicit") {
    sel.metric = SelectionMetric::kExplicit;
  } else if (metric == "all") {
    sel.metric = SelectionMetric::kAll;
  } else {
    fail(path + ".metric", "unknown selection metric '" + metric + "'");
  }
  if (const json* k = maybe(j, "k")) sel.k = get_int(*k, path + ".k");
  if (const json* nodes = maybe(j, "nodes"))
    sel.explicit_nodes = get_list<int>(*nodes, path + ".nodes", get_int);
  if (sel.metric == SelectionMetric::kExplicit && sel.explicit_nodes.empty())
    fail(path, "explicit selection needs a non-empty 'nodes' list");
  return sel;
}

SyntheticConfig parse_synthetic(const json& j, const std::string& path) {
  check_known_fields(j, path,
                     {"node_count", "with_data_count", "samples_per_node", "malicious_fraction",
                      "area_size", "class_separation", "test_fraction", "position_cluster_std"});
  SyntheticConfig cfg;
  if (const json* v = maybe(j, "node_count")) cfg.node_count = get_int(*v, path + ".node_count");
  if (const json* v = maybe(j, "with_data_count"))
    cfg.with_data_count = get_int(*v, path + ".with_data_count");
  if (const json* v = maybe(j, "samples_per_node"))
    cfg.samples_per_node = get_int(*v, path + ".samples_per_node");
  if (const json* v = maybe(j, "malicious_fraction"))
    cfg.malicious_fraction = get_number(*v, path + ".malicious_fraction");
  if (const json* v = maybe(j, "area_size")) cfg.area_size = get_number(*v, path + ".area_size");
  if (const json* v = maybe(j, "class_separation"))
    cfg.class_separation = get_number(*v, path + ".class_separation");
  if (const json* v = maybe(j, "test_fraction"))
    cfg.test_fraction = get_number(*v, path + ".test_fraction");
  if (const json* v = maybe(j, "position_cluster_std"))
    cfg.position_cluster_std = get_number(*v, path + ".position_cluster_std");
  return cfg;
}

TrainConfig parse_train(const json& j, const std::string& path) {
  check_known_fields(j, path, {"learning_rate", "batch_size", "local_epochs"});
  TrainConfig cfg;
  if (const json* v = maybe(j, "learning_rate"))
    cfg.learning_rate = get_number(*v, path + ".learning_rate");
  if (const json* v = maybe(j, "batch_size")) cfg.batch_size = get_int(*v, path + ".batch_size");
  if (const json* v = maybe(j, "local_epochs"))
    cfg.local_epochs = get_int(*v, path + ".local_epochs");
  return cfg;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json coords_json(const GridPoint& p) {
  json c;
  c["seed"] = p.seed;
  if (p.k) c["k"] = *p.k;
  if (p.p_a) c["p_a"] = *p.p_a;
  if (p.selection_ratio) c["selection_ratio"] = *p.selection_ratio;
  if (p.beta) c["beta"] = *p.beta;
  return c;
}

// Fixed emission order for metric columns.
const std::vector<std::string> kMetricOrder = {
    "p_bm", "p_bb", "p_mm", "p_mb",
    "pooled_p_bm", "pooled_p_bb", "pooled_p_mm", "pooled_p_mb",
    "trj_p_bm", "trj_p_mm", "pooled_trj_p_bm", "pooled_trj_p_mm",
    "defense_tp", "defense_fn", "defense_flagged", "defense_attacked"};

std::map<std::string, double> metrics_map(const PointResult& r) {
  std::map<std::string, double> m;
  m["p_bm"] = r.clean.p_bm;
  m["p_bb"] = r.clean.p_bb;
  m["p_mm"] = r.clean.p_mm;
  m["p_mb"] = r.clean.p_mb;
  m["pooled_p_bm"] = r.clean.pooled.p_bm();
  m["pooled_p_bb"] = r.clean.pooled.p_bb();
  m["pooled_p_mm"] = r.clean.pooled.p_mm();
  m["pooled_p_mb"] = r.clean.pooled.p_mb();
  if (r.triggered) {
    m["trj_p_bm"] = r.triggered->p_bm;
    m["trj_p_mm"] = r.triggered->p_mm;
    m["pooled_trj_p_bm"] = r.triggered->pooled.p_bm();
    m["pooled_trj_p_mm"] = r.triggered->pooled.p_mm();
  }
  if (r.detection) {
    m["defense_tp"] = r.detection->tp_rate;
    m["defense_fn"] = r.detection->fn_rate;
    m["defense_flagged"] = static_cast<double>(r.detection->flagged_count);
    m["defense_attacked"] = static_cast<double>(r.detection->attacked_count);
  }
  return m;
}

struct LoadedData {
  std::vector<NodeDataset> datasets;
  std::vector<Standardizer> standardizers;
};

LoadedData load_data(const Scenario& s, std::uint64_t master) {
  std::vector<NodeDataset> raw;
  if (s.synthetic) {
    SyntheticConfig cfg = *s.synthetic;
    cfg.seed = derive_seed(master, "data");
    raw = generate_synthetic(cfg);
  } else {
    const CsvSchema schema =
        s.csv->schema_path.empty() ? canonical_schema() : load_schema(s.csv->schema_path);
    raw = load_veremi_csv(s.csv->path, schema);
    raw = apply_split(raw, s.csv->test_fraction, derive_seed(master, "split"));
  }
  StandardizeResult std_result = standardize(raw);
  return {std::move(std_result.datasets), std::move(std_result.params)};
}

AdjacencyTimeline load_timeline_source(const Scenario& s, int node_count, std::uint64_t master) {
  if (s.random_timeline)
    return generate_random_timeline(node_count, s.random_timeline->steps,
                                    s.random_timeline->edge_probability,
                                    derive_seed(master, "timeline"));
  AdjacencyTimeline t = load_timeline(*s.timeline_file);
  if (t.node_count != node_count)
    throw std::runtime_error("timeline has " + std::to_string(t.node_count) +
                             " nodes but the dataset has " + std::to_string(node_count));
  return t;
}

void write_results_csv(const std::filesystem::path& path,
                       const std::vector<PointResult>& results) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());

  std::vector<std::string> metric_columns;
  if (!results.empty()) {
    const auto metrics = metrics_map(results.front());
    for (const auto& name : kMetricOrder)
      if (metrics.count(name) > 0) metric_columns.push_back(name);
  }

  out << "seed";
  const GridPoint& first = results.empty() ? GridPoint{} : results.front().point;
  if (first.k) out << ",k";
  if (first.p_a) out << ",p_a";
  if (first.selection_ratio) out << ",selection_ratio";
  if (first.beta) out << ",beta";
  for (const auto& name : metric_columns) out << ',' << name;
  out << '\n';

  for (const auto& r : results) {
    out << r.point.seed;
    if (r.point.k) out << ',' << *r.point.k;
    if (r.point.p_a) out << ',' << format_coord(*r.point.p_a);
    if (r.point.selection_ratio) out << ',' << format_coord(*r.point.selection_ratio);
    if (r.point.beta) out << ',' << format_coord(*r.point.beta);
    const auto metrics = metrics_map(r);
    for (const auto& name : metric_columns) out << ',' << format_metric(metrics.at(name));
    out << '\n';
  }
}

void write_round_log(const std::filesystem::path& path, const PointResult& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "round,node,P_BM,P_BB,P_MM,P_MB\n";
  for (std::size_t round = 0; round < r.history.size(); ++round) {
    const auto& per_node = r.history[round].per_node;
    for (std::size_t node = 0; node < per_node.size(); ++node) {
      if (!per_node[node]) continue;
      const ConfusionStats& s = *per_node[node];
      out << round << ',' << node << ',' << format_metric(s.p_bm()) << ','
          << format_metric(s.p_bb()) << ',' << format_metric(s.p_mm()) << ','
          << format_metric(s.p_mb()) << '\n';
    }
  }
}

json manifest_base(const Scenario& s, std::uint64_t master_seed) {
  json m;
  m["tool"] = kToolVersion;
  m["name"] = s.name;
  m["config"] = s.raw;
  m["config_hash"] = config_hash(s.raw);
  m["master_seed"] = master_seed;
  m["created_utc"] = utc_now();  // the only field that varies between reruns
  return m;
}

void write_manifest(const std::filesystem::path& path, json manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << manifest.dump(2) << '\n';
}

std::filesystem::path resolve_output_dir(const Scenario& s, const RunOptions& o) {
  std::filesystem::path dir = !o.output_dir_override.empty()
                                  ? std::filesystem::path(o.output_dir_override)
                              : !s.output_dir.empty()
                                  ? std::filesystem::path(s.output_dir)
                                  : std::filesystem::path("out") / s.name;
  std::filesystem::create_directories(dir);
  return dir;
}

std::uint64_t resolve_master_seed(const Scenario& s, const RunOptions& o) {
  return o.seed_override ? *o.seed_override : s.master_seed;
}

}  // namespace

std::string config_hash(const json& config) {
  const std::string bytes = config.dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Scenario parse_scenario(const json& config) {
  check_known_fields(config, "",
                     {"name", "master_seed", "output_dir", "data", "timeline", "dfl", "attack",
                      "defense", "sweep", "round_log", "checkpoint_every"});
  Scenario s;
  s.raw = config;

  if (const json* v = maybe(config, "name")) s.name = get_string(*v, "name");
  if (s.name.empty()) fail("name", "scenario needs a name");
  if (const json* v = maybe(config, "master_seed")) s.master_seed = get_seed(*v, "master_seed");
  if (const json* v = maybe(config, "output_dir")) s.output_dir = get_string(*v, "output_dir");
  if (const json* v = maybe(config, "round_log")) s.round_log = get_bool(*v, "round_log");
  if (const json* v = maybe(config, "checkpoint_every"))
    s.checkpoint_every = get_int(*v, "checkpoint_every");
  if (s.checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");

  const json* data = maybe(config, "data");
  if (data == nullptr) fail("data", "missing required section");
  check_known_fields(*data, "data", {"synthetic", "veremi_csv"});
  if (const json* v = maybe(*data, "synthetic")) s.synthetic = parse_synthetic(*v, "data.synthetic");
  if (const json* v = maybe(*data, "veremi_csv")) {
    check_known_fields(*v, "data.veremi_csv", {"path", "schema", "test_fraction"});
    CsvSource src;
    const json* path = maybe(*v, "path");
    if (path == nullptr) fail("data.veremi_csv.path", "missing required field");
    src.path = get_string(*path, "data.veremi_csv.path");
    if (const json* schema = maybe(*v, "schema"))
      src.schema_path = get_string(*schema, "data.veremi_csv.schema");
    if (const json* tf = maybe(*v, "test_fraction"))
      src.test_fraction = get_number(*tf, "data.veremi_csv.test_fraction");
    s.csv = std::move(src);
  }
  if (s.synthetic.has_value() == s.csv.has_value())
    fail("data", "exactly one of 'synthetic' or 'veremi_csv' is required");

  const json* timeline = maybe(config, "timeline");
  if (timeline == nullptr) fail("timeline", "missing required section");
  check_known_fields(*timeline, "timeline", {"random", "file"});
  if (const json* v = maybe(*timeline, "random")) {
    check_known_fields(*v, "timeline.random", {"steps", "edge_probability"});
    TimelineRandomConfig cfg;
    if (const json* steps = maybe(*v, "steps")) cfg.steps = get_int(*steps, "timeline.random.steps");
    if (const json* p = maybe(*v, "edge_probability"))
      cfg.edge_probability = get_number(*p, "timeline.random.edge_probability");
    s.random_timeline = cfg;
  }
  if (const json* v = maybe(*timeline, "file")) s.timeline_file = get_string(*v, "timeline.file");
  if (s.random_timeline.has_value() == s.timeline_file.has_value())
    fail("timeline", "exactly one of 'random' or 'file' is required");

  if (const json* dfl = maybe(config, "dfl")) {
    check_known_fields(*dfl, "dfl", {"rounds", "mode", "dataless_policy", "train"});
    if (const json* v = maybe(*dfl, "rounds")) s.dfl.rounds = get_int(*v, "dfl.rounds");
    if (const json* v = maybe(*dfl, "mode")) {
      const std::string mode = get_string(*v, "dfl.mode");
      if (mode == "dfl") {
        s.dfl.mode = LearningMode::kDfl;
      } else if (mode == "individual") {
        s.dfl.mode = LearningMode::kIndividual;
      } else {
        fail("dfl.mode", "expected 'dfl' or 'individual'");
      }
    }
    if (const json* v = maybe(*dfl, "dataless_policy")) {
      const std::string policy = get_string(*v, "dfl.dataless_policy");
      if (policy == "relay") {
        s.dfl.dataless_policy = DatalessPolicy::kRelay;
      } else if (policy == "exclude") {
        s.dfl.dataless_policy = DatalessPolicy::kExclude;
      } else {
        fail("dfl.dataless_policy", "expected 'relay' or 'exclude'");
      }
    }
    if (const json* v = maybe(*dfl, "train")) s.dfl.train = parse_train(*v, "dfl.train");
  }
  if (s.dfl.rounds < 1) fail("dfl.rounds", "must be >= 1");

  if (const json* attack = maybe(config, "attack")) {
    check_known_fields(*attack, "attack", {"targeted", "backdoor"});
    if (const json* v = maybe(*attack, "targeted")) {
      check_known_fields(*v, "attack.targeted", {"selection", "p_a"});
      TargetedAttackSpec spec;
      if (const json* sel = maybe(*v, "selection"))
        spec.selection = parse_selection(*sel, "attack.targeted.selection");
      if (const json* p = maybe(*v, "p_a")) spec.p_a = get_number(*p, "attack.targeted.p_a");
      if (spec.p_a < 0.0 || spec.p_a > 1.0) fail("attack.targeted.p_a", "must be in [0, 1]");
      s.targeted = std::move(spec);
    }
    if (const json* v = maybe(*attack, "backdoor")) {
      check_known_fields(*v, "attack.backdoor", {"trigger", "selection_ratio", "selection"});
      BackdoorAttackSpec spec;
      if (const json* trig = maybe(*v, "trigger")) {
        const auto values =
            get_list<double>(*trig, "attack.backdoor.trigger", get_number);
        if (values.size() != 2) fail("attack.backdoor.trigger", "expected [pos1, pos2]");
        spec.trigger_pos1 = values[0];
        spec.trigger_pos2 = values[1];
      }
      if (const json* r = maybe(*v, "selection_ratio"))
        spec.selection_ratio = get_number(*r, "attack.backdoor.selection_ratio");
      if (spec.selection_ratio < 0.0 || spec.selection_ratio > 1.0)
        fail("attack.backdoor.selection_ratio", "must be in [0, 1]");
      if (const json* sel = maybe(*v, "selection"))
        spec.selection = parse_selection(*sel, "attack.backdoor.selection");
      s.backdoor = std::move(spec);
    }
    if (s.targeted && s.backdoor)
      fail("attack", "at most one of 'targeted' or 'backdoor' may be set");
  }

  if (const json* defense = maybe(config, "defense")) {
    check_known_fields(*defense, "defense", {"cluster", "mad"});
    if (const json* v = maybe(*defense, "cluster")) {
      check_known_fields(*v, "defense.cluster",
                         {"feature_mode", "prior_knowledge", "beta", "action", "feature_groups"});
      ClusterDefenseSpec spec;
      if (const json* mode = maybe(*v, "feature_mode")) {
        const std::string name = get_string(*mode, "defense.cluster.feature_mode");
        if (name == "all22") {
          spec.feature_mode = FeatureMode::kAll22;
        } else if (name == "reduced6") {
          spec.feature_mode = FeatureMode::kReduced6;
        } else {
          fail("defense.cluster.feature_mode", "expected 'all22' or 'reduced6'");
        }
      }
      if (const json* p = maybe(*v, "prior_knowledge"))
        spec.prior_knowledge = get_bool(*p, "defense.cluster.prior_knowledge");
      if (const json* b = maybe(*v, "beta")) spec.beta = get_number(*b, "defense.cluster.beta");
      if (spec.beta < 0.5 || spec.beta > 1.5)
        fail("defense.cluster.beta", "must be in [0.5, 1.5]");
      if (const json* a = maybe(*v, "action")) {
        const std::string name = get_string(*a, "defense.cluster.action");
        if (name == "remove") {
          spec.action = SanitizeAction::kRemove;
        } else if (name == "flip") {
          spec.action = SanitizeAction::kFlip;
        } else {
          fail("defense.cluster.action", "expected 'remove' or 'flip'");
        }
      }
      if (const json* groups = maybe(*v, "feature_groups")) {
        spec.feature_groups.clear();
        std::size_t g = 0;
        for (const auto& group : *groups) {
          spec.feature_groups.push_back(get_list<int>(
              group, "defense.cluster.feature_groups[" + std::to_string(g++) + "]", get_int));
        }
      }
      s.cluster_defense = std::move(spec);
    }
    if (const json* v = maybe(*defense, "mad")) {
      check_known_fields(*v, "defense.mad",
                         {"threshold", "consistency_constant", "monitored_features"});
      MadDefenseSpec spec;
      if (const json* t = maybe(*v, "threshold"))
        spec.threshold = get_number(*t, "defense.mad.threshold");
      if (const json* c = maybe(*v, "consistency_constant"))
        spec.consistency_constant = get_number(*c, "defense.mad.consistency_constant");
      if (const json* f = maybe(*v, "monitored_features"))
        spec.monitored_features = get_list<int>(*f, "defense.mad.monitored_features", get_int);
      s.mad_defense = std::move(spec);
    }
    if (s.cluster_defense && s.mad_defense)
      fail("defense", "at most one of 'cluster' or 'mad' may be set");
  }

  if (const json* sweep = maybe(config, "sweep")) {
    check_known_fields(*sweep, "sweep",
                       {"seed", "attack.k", "attack.p_a", "attack.selection_ratio",
                        "defense.beta"});
    if (const json* v = maybe(*sweep, "seed"))
      s.seed_axis = get_list<std::uint64_t>(*v, "sweep.seed", get_seed);
    if (const json* v = maybe(*sweep, "attack.k")) {
      if (!s.targeted && !s.backdoor)
        fail("sweep.attack.k", "no attack is configured");
      s.k_axis = get_list<int>(*v, "sweep.attack.k", get_int);
    }
    if (const json* v = maybe(*sweep, "attack.p_a")) {
      if (!s.targeted) fail("sweep.attack.p_a", "no targeted attack is configured");
      s.p_a_axis = get_list<double>(*v, "sweep.attack.p_a", get_number);
    }
    if (const json* v = maybe(*sweep, "attack.selection_ratio")) {
      if (!s.backdoor) fail("sweep.attack.selection_ratio", "no backdoor attack is configured");
      s.ratio_axis = get_list<double>(*v, "sweep.attack.selection_ratio", get_number);
    }
    if (const json* v = maybe(*sweep, "defense.beta")) {
      if (!s.cluster_defense) fail("sweep.defense.beta", "no cluster defense is configured");
      s.beta_axis = get_list<double>(*v, "sweep.defense.beta", get_number);
    }
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario file is not valid JSON: " + std::string(e.what()));
  }
  return parse_scenario(j);
}

// Coordinates cover exactly the swept axes (plus the seed); fixed
// parameters stay in the config so runs that differ only in fixed fields
// remain grid-comparable.
std::vector<GridPoint> grid_points(const Scenario& s) {
  const std::vector<std::uint64_t> seeds =
      s.seed_axis.empty() ? std::vector<std::uint64_t>{s.master_seed} : s.seed_axis;

  std::vector<std::optional<int>> ks{std::nullopt};
  if (!s.k_axis.empty()) {
    ks.clear();
    for (const int k : s.k_axis) ks.emplace_back(k);
  }

  std::vector<std::optional<double>> pas{std::nullopt};
  if (!s.p_a_axis.empty()) {
    pas.clear();
    for (const double v : s.p_a_axis) pas.emplace_back(v);
  }

  std::vector<std::optional<double>> ratios{std::nullopt};
  if (!s.ratio_axis.empty()) {
    ratios.clear();
    for (const double v : s.ratio_axis) ratios.emplace_back(v);
  }

  std::vector<std::optional<double>> betas{std::nullopt};
  if (!s.beta_axis.empty()) {
    betas.clear();
    for (const double v : s.beta_axis) betas.emplace_back(v);
  }

  std::vector<GridPoint> points;
  for (const auto seed : seeds)
    for (const auto& k : ks)
      for (const auto& pa : pas)
        for (const auto& ratio : ratios)
          for (const auto& beta : betas) points.push_back({seed, k, pa, ratio, beta});
  return points;
}

PointResult run_grid_point(const Scenario& s, const GridPoint& point) {
  PointResult result;
  result.point = point;
  const std::uint64_t master = point.seed;

  auto t0 = Clock::now();
  LoadedData data = load_data(s, master);
  const int node_count = static_cast<int>(data.datasets.size());
  AdjacencyTimeline timeline = load_timeline_source(s, node_count, master);
  const NodeMetrics node_metrics = compute_metrics(timeline);
  result.timings_s["data"] = seconds_since(t0);

  // Attack phase.
  t0 = Clock::now();
  std::vector<NodeDataset> datasets = std::move(data.datasets);
  PoisonRecord record;
  std::optional<BackdoorAttackSpec> backdoor;
  if (s.targeted) {
    TargetedAttackSpec spec = *s.targeted;
    if (point.p_a) spec.p_a = *point.p_a;
    if (point.k) spec.selection.k = *point.k;
    spec.seed = derive_seed(master, "attack");
    AttackResult attacked = poison_targeted(datasets, spec, &node_metrics);
    datasets = std::move(attacked.datasets);
    record = std::move(attacked.record);
  } else if (s.backdoor) {
    BackdoorAttackSpec spec = *s.backdoor;
    if (point.selection_ratio) spec.selection_ratio = *point.selection_ratio;
    if (point.k) spec.selection.k = *point.k;
    spec.seed = derive_seed(master, "attack");
    AttackResult attacked = implant_backdoor(datasets, spec, data.standardizers, &node_metrics);
    datasets = std::move(attacked.datasets);
    record = std::move(attacked.record);
    backdoor = std::move(spec);
  }
  result.timings_s["attack"] = seconds_since(t0);

  // Defense phase.
  t0 = Clock::now();
  if (s.cluster_defense) {
    ClusterDefenseSpec spec = *s.cluster_defense;
    if (point.beta) spec.beta = *point.beta;
    spec.seed = derive_seed(master, "defense");
    std::vector<NodeFlags> flags =
        cluster_detect(datasets, spec, record.empty() ? nullptr : &record);
    if (!record.empty())
      result.detection = build_detection_report(flags, record, datasets);
    datasets = sanitize(datasets, flags, spec.action);
  } else if (s.mad_defense) {
    std::vector<NodeFlags> flags = mad_detect(datasets, *s.mad_defense);
    if (!record.empty())
      result.detection = build_detection_report(flags, record, datasets);
    datasets = sanitize(datasets, flags, SanitizeAction::kRemove);
  }
  result.timings_s["defense"] = seconds_since(t0);

  // Training.
  t0 = Clock::now();
  DflConfig cfg = s.dfl;
  cfg.train.seed = derive_seed(master, "train");
  cfg.record_history = s.round_log;
  NetworkState state;
  if (s.checkpoint_every > 0) cfg.record_history = true;  // snapshots carry metrics
  if (s.checkpoint_every == 0) {
    state = run_dfl(datasets, timeline, cfg);
  } else {
    // Same loop as run_dfl, with model snapshots along the way.
    state.models.reserve(static_cast<std::size_t>(node_count));
    for (int i = 0; i < node_count; ++i) state.models.push_back(initial_model_for_node(cfg, i));
    for (int round = 0; round < cfg.rounds; ++round) {
      const auto& step = timeline.steps[static_cast<std::size_t>(round) % timeline.steps.size()];
      state = run_round(state, step, datasets, cfg);
      if ((round + 1) % s.checkpoint_every == 0 || round + 1 == cfg.rounds)
        result.checkpoints.emplace_back(round + 1, state.models);
    }
  }
  result.history = std::move(state.history);
  result.timings_s["train"] = seconds_since(t0);

  // Evaluation: clean test context, plus the triggered context for
  // backdoor scenarios.
  t0 = Clock::now();
  std::vector<ConfusionStats> clean_stats;
  std::vector<ConfusionStats> triggered_stats;
  for (int i = 0; i < node_count; ++i) {
    const auto& d = datasets[static_cast<std::size_t>(i)];
    if (!d.has_data()) continue;
    result.evaluated_nodes.push_back(d.node_id);
    clean_stats.push_back(confusion(state.models[static_cast<std::size_t>(i)], d.test));
    if (backdoor) {
      bool any_malicious = false;
      for (const auto& sample : d.test)
        any_malicious = any_malicious || sample.label == Label::kMalicious;
      if (any_malicious) {
        const std::vector<Sample> triggered = activate_backdoor(
            d.test, *backdoor, &standardizer_for(data.standardizers, d.node_id));
        triggered_stats.push_back(confusion(state.models[static_cast<std::size_t>(i)], triggered));
      }
    }
  }
  result.clean = network_average(clean_stats);
  if (backdoor && !triggered_stats.empty()) result.triggered = network_average(triggered_stats);
  result.timings_s["eval"] = seconds_since(t0);
  result.standardizers = std::move(data.standardizers);
  result.poison_record = std::move(record);
  return result;
}

void run_scenario(const Scenario& s, const RunOptions& options) {
  const std::filesystem::path out_dir = resolve_output_dir(s, options);
  Scenario effective = s;
  effective.master_seed = resolve_master_seed(s, options);

  const std::vector<GridPoint> points = grid_points(effective);
  std::vector<PointResult> results(points.size());

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1 || points.size() <= 1) {
    for (std::size_t i = 0; i < points.size(); ++i)
      results[i] = run_grid_point(effective, points[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1))
            results[i] = run_grid_point(effective, points[i]);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  write_results_csv(out_dir / "results.csv", results);
  for (std::size_t i = 0; i < results.size(); ++i) {
    save_standardizers_json(results[i].standardizers,
                            out_dir / ("standardizers_" + std::to_string(i) + ".json"));
    if (!results[i].poison_record.empty())
      save_poison_record_json(results[i].poison_record,
                              out_dir / ("poison_record_" + std::to_string(i) + ".json"));
  }
  if (effective.round_log)
    for (std::size_t i = 0; i < results.size(); ++i)
      write_round_log(out_dir / ("rounds_" + std::to_string(i) + ".csv"), results[i]);
  if (effective.checkpoint_every > 0) {
    for (std::size_t i = 0; i < results.size(); ++i) {
      for (const auto& [round, models] : results[i].checkpoints) {
        json snapshot;
        snapshot["round"] = round;
        json nodes = json::array();
        for (const auto& model : models) {
          const Eigen::VectorXd flat = to_flat(model);
          nodes.push_back(std::vector<double>(flat.data(), flat.data() + flat.size()));
        }
        snapshot["models"] = std::move(nodes);
        // Round metrics recorded alongside the weights.
        const auto& history = results[i].history;
        if (round >= 1 && static_cast<std::size_t>(round) <= history.size()) {
          json metrics = json::array();
          for (const auto& stats : history[static_cast<std::size_t>(round - 1)].per_node) {
            if (stats) {
              metrics.push_back({{"p_bm", stats->p_bm()},
                                 {"p_bb", stats->p_bb()},
                                 {"p_mm", stats->p_mm()},
                                 {"p_mb", stats->p_mb()}});
            } else {
              metrics.push_back(nullptr);
            }
          }
          snapshot["metrics"] = std::move(metrics);
        }
        std::ofstream out(out_dir / ("checkpoint_" + std::to_string(i) + "_round_" +
                                     std::to_string(round) + ".json"));
        out << snapshot.dump();
      }
    }
  }

  json manifest = manifest_base(effective, effective.master_seed);
  json axes;
  if (!effective.seed_axis.empty()) axes["seed"] = effective.seed_axis;
  if (!effective.k_axis.empty()) axes["k"] = effective.k_axis;
  if (!effective.p_a_axis.empty()) axes["p_a"] = effective.p_a_axis;
  if (!effective.ratio_axis.empty()) axes["selection_ratio"] = effective.ratio_axis;
  if (!effective.beta_axis.empty()) axes["beta"] = effective.beta_axis;
  manifest["axes"] = std::move(axes);
  json point_list = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    json p;
    p["coords"] = coords_json(results[i].point);
    p["metrics"] = metrics_map(results[i]);
    p["timings_s"] = results[i].timings_s;
    p["standardizers"] = "standardizers_" + std::to_string(i) + ".json";
    if (!results[i].poison_record.empty())
      p["poison_record"] = "poison_record_" + std::to_string(i) + ".json";
    if (effective.round_log) p["round_log"] = "rounds_" + std::to_string(i) + ".csv";
    point_list.push_back(std::move(p));
  }
  manifest["points"] = std::move(point_list);
  manifest["outputs"] = {{"results_csv", "results.csv"}};
  write_manifest(out_dir / "manifest.json", std::move(manifest));
}

void run_defense_sweep(const Scenario& s, const RunOptions& options) {
  if (!s.cluster_defense)
    throw ConfigError("defense sweep requires a cluster defense configuration");
  if (s.beta_axis.empty())
    throw ConfigError("defense sweep requires a sweep.defense.beta axis");
  if (s.backdoor)
    std::fprintf(stderr,
                 "warning: sweeping the clustering defense against a backdoor attack; "
                 "this is a legitimate but unusual pairing\n");

  const std::filesystem::path out_dir = resolve_output_dir(s, options);
  const std::uint64_t master = resolve_master_seed(s, options);

  LoadedData data = load_data(s, master);
  const int node_count = static_cast<int>(data.datasets.size());
  const AdjacencyTimeline timeline = load_timeline_source(s, node_count, master);
  const NodeMetrics node_metrics = compute_metrics(timeline);

  std::vector<NodeDataset> datasets = std::move(data.datasets);
  PoisonRecord record;
  if (s.targeted) {
    TargetedAttackSpec spec = *s.targeted;
    spec.seed = derive_seed(master, "attack");
    AttackResult attacked = poison_targeted(datasets, spec, &node_metrics);
    datasets = std::move(attacked.datasets);
    record = std::move(attacked.record);
  } else if (s.backdoor) {
    BackdoorAttackSpec spec = *s.backdoor;
    spec.seed = derive_seed(master, "attack");
    AttackResult attacked = implant_backdoor(datasets, spec, data.standardizers, &node_metrics);
    datasets = std::move(attacked.datasets);
    record = std::move(attacked.record);
  } else {
    throw ConfigError("defense sweep requires an attack to measure against");
  }

  json curves = json::object();
  for (const bool prior : {true, false}) {
    for (const FeatureMode mode : {FeatureMode::kAll22, FeatureMode::kReduced6}) {
      ClusterDefenseSpec spec = *s.cluster_defense;
      spec.prior_knowledge = prior;
      spec.feature_mode = mode;
      spec.seed = derive_seed(master, "defense");
      const std::vector<ClusterModel> models =
          fit_cluster_models(datasets, spec, prior ? &record : nullptr);

      std::vector<std::pair<double, std::vector<NodeFlags>>> flags_per_beta;
      for (const double beta : s.beta_axis)
        flags_per_beta.emplace_back(beta, flags_at_beta(models, beta));
      const std::vector<CurvePoint> curve = tp_fn_curve(flags_per_beta, record, datasets);

      const std::string file = std::string("curve_") + (prior ? "prior" : "noprior") + "_" +
                               (mode == FeatureMode::kAll22 ? "all22" : "reduced6") + ".csv";
      std::ofstream out(out_dir / file);
      if (!out) throw std::runtime_error("cannot write " + (out_dir / file).string());
      out << "beta,tp,fn\n";
      for (const auto& p : curve)
        out << format_coord(p.beta) << ',' << format_metric(p.tp) << ',' << format_metric(p.fn)
            << '\n';
      curves[file] = {{"prior_knowledge", prior},
                      {"feature_mode", mode == FeatureMode::kAll22 ? "all22" : "reduced6"}};
    }
  }

  json manifest = manifest_base(s, master);
  manifest["axes"] = {{"beta", s.beta_axis}};
  manifest["outputs"] = std::move(curves);
  write_manifest(out_dir / "manifest.json", std::move(manifest));
}

Comparison compare_runs(const std::filesystem::path& manifest_a,
                        const std::filesystem::path& manifest_b) {
  auto load = [](const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest: " + path.string());
    json j;
    in >> j;
    return j;
  };
  const json a = load(manifest_a);
  const json b = load(manifest_b);

  const json axes_a = a.value("axes", json::object());
  const json axes_b = b.value("axes", json::object());
  if (axes_a != axes_b) {
    std::string differing;
    for (const auto& item : axes_a.items())
      if (!axes_b.contains(item.key()) || axes_b[item.key()] != item.value())
        differing += (differing.empty() ? "" : ", ") + item.key();
    for (const auto& item : axes_b.items())
      if (!axes_a.contains(item.key())) differing += (differing.empty() ? "" : ", ") + item.key();
    throw std::runtime_error("grids differ on axes: " + differing);
  }

  const json& points_a = a.at("points");
  const json& points_b = b.at("points");
  if (points_a.size() != points_b.size())
    throw std::runtime_error("manifests have different grid sizes");

  Comparison cmp;
  for (std::size_t i = 0; i < points_a.size(); ++i) {
    const json& pa = points_a[i];
    const json& pb = points_b[i];
    if (pa.at("coords") != pb.at("coords"))
      throw std::runtime_error("grid point " + std::to_string(i) + " coordinates differ");
    ComparisonRow row;
    row.coords = pa.at("coords");
    for (const auto& item : pa.at("metrics").items()) {
      if (!pb.at("metrics").contains(item.key())) continue;
      const double delta =
          pb.at("metrics")[item.key()].get<double>() - item.value().get<double>();
      row.deltas[item.key()] = delta;
      cmp.mean_deltas[item.key()] += delta;
    }
    cmp.rows.push_back(std::move(row));
  }
  if (!cmp.rows.empty())
    for (auto& [name, total] : cmp.mean_deltas) total /= static_cast<double>(cmp.rows.size());
  for (const auto& name : kMetricOrder)
    if (!cmp.rows.empty() && cmp.rows.front().deltas.count(name) > 0)
      cmp.metric_columns.push_back(name);
  return cmp;
}

void save_comparison_csv(const Comparison& cmp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::vector<std::string> coord_columns;
  if (!cmp.rows.empty())
    for (const auto& item : cmp.rows.front().coords.items()) coord_columns.push_back(item.key());

  for (std::size_t i = 0; i < coord_columns.size(); ++i) out << (i ? "," : "") << coord_columns[i];
  for (const auto& name : cmp.metric_columns) out << ",delta_" << name;
  out << '\n';
  for (const auto& row : cmp.rows) {
    for (std::size_t i = 0; i < coord_columns.size(); ++i) {
      const json& v = row.coords.at(coord_columns[i]);
      out << (i ? "," : "");
      if (v.is_number_float()) {
        out << format_coord(v.get<double>());
      } else {
        out << v.dump();
      }
    }
    for (const auto& name : cmp.metric_columns) out << ',' << format_metric(row.deltas.at(name));
    out << '\n';
  }
  out << "mean";
  for (std::size_t i = 1; i < coord_columns.size(); ++i) out << ',';
  for (const auto& name : cmp.metric_columns) out << ',' << format_metric(cmp.mean_deltas.at(name));
  out << '\n';
}

}  // namespace dflsim
