#include "dflsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dflsim/rng.hpp"

namespace dflsim {

namespace {

using json = nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &consumed);
  } catch (const std::exception&) {
    consumed = 0;
  }
  if (consumed != cell.size() || cell.empty())
    throw std::runtime_error("row " + std::to_string(row) + ", column '" + column +
                             "': not a number: '" + cell + "'");
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

CsvSchema canonical_schema() {
  CsvSchema s;
  s.node_column = "node_id";
  s.sample_id_column = "sample_id";
  s.label_column = "label";
  s.malicious_value = "M";
  s.benign_value = "B";
  for (int f = 0; f < kFeatureCount; ++f) {
    char name[8];
    std::snprintf(name, sizeof(name), "f%02d", f);
    s.feature_columns.emplace_back(name);
  }
  return s;
}

CsvSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read schema file: " + path.string());
  json j;
  in >> j;
  CsvSchema s;
  s.node_column = j.at("node_column").get<std::string>();
  s.label_column = j.at("label_column").get<std::string>();
  if (j.contains("sample_id_column")) s.sample_id_column = j["sample_id_column"].get<std::string>();
  if (j.contains("malicious_value")) s.malicious_value = j["malicious_value"].get<std::string>();
  if (j.contains("benign_value")) s.benign_value = j["benign_value"].get<std::string>();
  s.feature_columns = j.at("feature_columns").get<std::vector<std::string>>();
  if (s.feature_columns.size() != static_cast<std::size_t>(kFeatureCount))
    throw std::runtime_error("schema must list exactly " + std::to_string(kFeatureCount) +
                             " feature columns");
  return s;
}

std::vector<NodeDataset> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.node_count < 1) throw std::invalid_argument("node_count must be >= 1");
  if (cfg.with_data_count > cfg.node_count)
    throw std::invalid_argument("with_data_count exceeds node_count");
  if (cfg.with_data_count < 1) throw std::invalid_argument("with_data_count must be >= 1");
  if (cfg.malicious_fraction <= 0.0 || cfg.malicious_fraction >= 1.0)
    throw std::invalid_argument("malicious_fraction must be in (0, 1)");
  if (cfg.samples_per_node < 4) throw std::invalid_argument("samples_per_node must be >= 4");
  if (cfg.area_size <= 0.0) throw std::invalid_argument("area_size must be positive");
  if (cfg.class_separation < 0.0) throw std::invalid_argument("class_separation must be >= 0");
  if (cfg.test_fraction <= 0.0 || cfg.test_fraction >= 1.0)
    throw std::invalid_argument("test_fraction must be in (0, 1)");

  // Class means shared by all nodes: a common random offset plus/minus half
  // the separation along a random unit direction of the non-position features.
  std::vector<int> signal_features;
  for (int f = 0; f < kFeatureCount; ++f)
    if (f != kPos1Index && f != kPos2Index) signal_features.push_back(f);

  Rng class_rng(derive_seed(cfg.seed, "class-means"));
  Eigen::VectorXd direction(static_cast<Eigen::Index>(signal_features.size()));
  for (Eigen::Index i = 0; i < direction.size(); ++i) direction[i] = class_rng.normal();
  direction.normalize();
  Eigen::VectorXd offset(direction.size());
  for (Eigen::Index i = 0; i < offset.size(); ++i) offset[i] = class_rng.normal();

  const Eigen::VectorXd mean_benign = offset - 0.5 * cfg.class_separation * direction;
  const Eigen::VectorXd mean_malicious = offset + 0.5 * cfg.class_separation * direction;

  std::vector<NodeDataset> datasets(static_cast<std::size_t>(cfg.node_count));
  std::int64_t next_sample_id = 0;
  for (int node = 0; node < cfg.node_count; ++node) {
    datasets[static_cast<std::size_t>(node)].node_id = node;
    if (node >= cfg.with_data_count) continue;

    Rng rng(derive_seed(cfg.seed, "node", static_cast<std::uint64_t>(node)));
    const int n = cfg.samples_per_node;
    const int m_count = std::clamp<int>(
        static_cast<int>(std::lround(cfg.malicious_fraction * n)), 1, n - 1);
    std::vector<Label> labels(static_cast<std::size_t>(n), Label::kBenign);
    std::fill_n(labels.begin(), m_count, Label::kMalicious);
    rng.shuffle(labels);

    const double anchor1 = rng.uniform(0.0, cfg.area_size);
    const double anchor2 = rng.uniform(0.0, cfg.area_size);

    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Sample s;
      s.node_id = node;
      s.sample_id = next_sample_id++;
      s.label = labels[static_cast<std::size_t>(i)];
      s.features.resize(kFeatureCount);
      const Eigen::VectorXd& mean =
          s.label == Label::kMalicious ? mean_malicious : mean_benign;
      for (std::size_t k = 0; k < signal_features.size(); ++k)
        s.features[signal_features[k]] = mean[static_cast<Eigen::Index>(k)] + rng.normal();
      if (cfg.position_cluster_std > 0.0) {
        s.features[kPos1Index] = rng.normal(anchor1, cfg.position_cluster_std);
        s.features[kPos2Index] = rng.normal(anchor2, cfg.position_cluster_std);
      } else {
        s.features[kPos1Index] = rng.uniform(0.0, cfg.area_size);
        s.features[kPos2Index] = rng.uniform(0.0, cfg.area_size);
      }
      samples.push_back(std::move(s));
    }

    SplitResult split = split_train_test(samples, cfg.test_fraction,
                                         derive_seed(cfg.seed, "split", static_cast<std::uint64_t>(node)));
    datasets[static_cast<std::size_t>(node)].train = std::move(split.train);
    datasets[static_cast<std::size_t>(node)].test = std::move(split.test);
  }
  return datasets;
}

std::vector<NodeDataset> load_veremi_csv(const std::filesystem::path& path,
                                         const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read CSV file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV file: " + path.string());
  const std::vector<std::string> header = split_csv_line(line);

  auto column_index = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error("missing column '" + name + "' in " + path.string());
    return static_cast<int>(it - header.begin());
  };

  const int node_col = column_index(schema.node_column);
  const int label_col = column_index(schema.label_column);
  const int id_col = schema.sample_id_column.empty() ? -1 : column_index(schema.sample_id_column);
  std::vector<int> feature_cols;
  for (const auto& name : schema.feature_columns) feature_cols.push_back(column_index(name));

  std::map<int, std::vector<Sample>> by_node;
  std::size_t row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    Sample s;
    s.node_id = static_cast<int>(parse_number(cells[static_cast<std::size_t>(node_col)], row,
                                              schema.node_column));
    s.sample_id = id_col >= 0
                      ? static_cast<std::int64_t>(parse_number(
                            cells[static_cast<std::size_t>(id_col)], row, schema.sample_id_column))
                      : static_cast<std::int64_t>(row - 2);
    const std::string& label_cell = cells[static_cast<std::size_t>(label_col)];
    if (label_cell == schema.malicious_value) {
      s.label = Label::kMalicious;
    } else if (label_cell == schema.benign_value) {
      s.label = Label::kBenign;
    } else {
      throw std::runtime_error("row " + std::to_string(row) + ": label '" + label_cell +
                               "' is neither '" + schema.malicious_value + "' nor '" +
                               schema.benign_value + "'");
    }
    s.features.resize(kFeatureCount);
    for (int f = 0; f < kFeatureCount; ++f)
      s.features[f] = parse_number(cells[static_cast<std::size_t>(feature_cols[f])], row,
                                   schema.feature_columns[static_cast<std::size_t>(f)]);
    by_node[s.node_id].push_back(std::move(s));
  }

  std::vector<NodeDataset> datasets;
  datasets.reserve(by_node.size());
  for (auto& [node_id, samples] : by_node) {
    NodeDataset d;
    d.node_id = node_id;
    d.train = std::move(samples);
    datasets.push_back(std::move(d));
  }
  return datasets;
}

void save_canonical_csv(const std::vector<NodeDataset>& datasets,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV file: " + path.string());
  out << "node_id,sample_id,label";
  for (int f = 0; f < kFeatureCount; ++f) {
    char name[8];
    std::snprintf(name, sizeof(name), "f%02d", f);
    out << ',' << name;
  }
  out << '\n';
  auto write_sample = [&](const Sample& s) {
    out << s.node_id << ',' << s.sample_id << ',' << label_char(s.label);
    for (int f = 0; f < kFeatureCount; ++f) out << ',' << format_double(s.features[f]);
    out << '\n';
  };
  for (const auto& d : datasets) {
    for (const auto& s : d.train) write_sample(s);
    for (const auto& s : d.test) write_sample(s);
  }
}

SplitResult split_train_test(const std::vector<Sample>& samples, double test_fraction,
                             std::uint64_t seed) {
  if (samples.size() < 2) throw std::invalid_argument("split needs at least 2 samples");
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("test_fraction must be in (0, 1)");

  Rng rng(seed);
  std::vector<std::size_t> benign_idx, malicious_idx;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (samples[i].label == Label::kMalicious ? malicious_idx : benign_idx).push_back(i);

  std::vector<bool> in_test(samples.size(), false);
  for (auto* idx : {&benign_idx, &malicious_idx}) {
    if (idx->empty()) continue;
    rng.shuffle(*idx);
    const std::size_t n = idx->size();
    std::size_t take = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(n)));
    if (n >= 2) take = std::clamp<std::size_t>(take, 1, n - 1);
    if (n == 1) take = 0;  // a lone sample stays in train
    for (std::size_t i = 0; i < take; ++i) in_test[(*idx)[i]] = true;
  }

  SplitResult result;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (in_test[i] ? result.test : result.train).push_back(samples[i]);
  return result;
}

std::vector<NodeDataset> apply_split(const std::vector<NodeDataset>& datasets,
                                     double test_fraction, std::uint64_t seed) {
  std::vector<NodeDataset> out;
  out.reserve(datasets.size());
  for (const auto& d : datasets) {
    NodeDataset next;
    next.node_id = d.node_id;
    next.standardized = d.standardized;
    std::vector<Sample> all = d.train;
    all.insert(all.end(), d.test.begin(), d.test.end());
    if (all.size() >= 2) {
      SplitResult split = split_train_test(
          all, test_fraction, derive_seed(seed, "split", static_cast<std::uint64_t>(d.node_id)));
      next.train = std::move(split.train);
      next.test = std::move(split.test);
    } else {
      next.train = std::move(all);
    }
    out.push_back(std::move(next));
  }
  return out;
}

StandardizeResult standardize(const std::vector<NodeDataset>& datasets) {
  StandardizeResult result;
  result.datasets = datasets;
  result.params.reserve(datasets.size());
  for (auto& d : result.datasets) {
    if (d.standardized)
      throw std::logic_error("standardize: node " + std::to_string(d.node_id) +
                             " is already standardized");
    Standardizer p;
    p.node_id = d.node_id;
    p.mean = Eigen::VectorXd::Zero(kFeatureCount);
    p.scale = Eigen::VectorXd::Ones(kFeatureCount);
    if (!d.train.empty()) {
      for (int f = 0; f < kFeatureCount; ++f) {
        double lo = d.train.front().features[f], hi = lo, sum = 0.0;
        for (const auto& s : d.train) {
          lo = std::min(lo, s.features[f]);
          hi = std::max(hi, s.features[f]);
          sum += s.features[f];
        }
        if (lo == hi) continue;  // constant feature: identity transform
        const double mean = sum / static_cast<double>(d.train.size());
        double ss = 0.0;
        for (const auto& s : d.train) {
          const double dev = s.features[f] - mean;
          ss += dev * dev;
        }
        p.mean[f] = mean;
        p.scale[f] = std::sqrt(ss / static_cast<double>(d.train.size()));
      }
      for (auto* part : {&d.train, &d.test})
        for (auto& s : *part)
          s.features = ((s.features - p.mean).array() / p.scale.array()).matrix();
    }
    d.standardized = true;
    result.params.push_back(std::move(p));
  }
  return result;
}

void save_standardizers_json(const std::vector<Standardizer>& params,
                             const std::filesystem::path& path) {
  json j = json::array();
  for (const auto& p : params) {
    json entry;
    entry["node_id"] = p.node_id;
    entry["mean"] = std::vector<double>(p.mean.data(), p.mean.data() + p.mean.size());
    entry["scale"] = std::vector<double>(p.scale.data(), p.scale.data() + p.scale.size());
    j.push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << j.dump(2) << '\n';
}

const Standardizer& standardizer_for(const std::vector<Standardizer>& params, int node_id) {
  for (const auto& p : params)
    if (p.node_id == node_id) return p;
  throw std::invalid_argument("no standardizer for node " + std::to_string(node_id));
}

}  // namespace dflsim
