#include "dflsim/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "dflsim/rng.hpp"

namespace dflsim {

namespace {

using json = nlohmann::json;

const Standardizer* find_standardizer(const std::vector<Standardizer>& params, int node_id) {
  for (const auto& p : params)
    if (p.node_id == node_id) return &p;
  return nullptr;
}

}  // namespace

bool PoisonRecord::empty() const { return total_poisoned() == 0; }

std::size_t PoisonRecord::total_poisoned() const {
  std::size_t total = 0;
  for (const auto& [node, entries] : by_node) total += entries.size();
  return total;
}

bool PoisonRecord::is_attacked(int node_id, std::int64_t sample_id) const {
  const auto it = by_node.find(node_id);
  if (it == by_node.end()) return false;
  for (const auto& e : it->second)
    if (e.sample_id == sample_id) return true;
  return false;
}

Label PoisonRecord::original_label(int node_id, std::int64_t sample_id, Label current) const {
  const auto it = by_node.find(node_id);
  if (it == by_node.end()) return current;
  for (const auto& e : it->second)
    if (e.sample_id == sample_id) return e.original_label;
  return current;
}

std::vector<int> select_victims(const NodeSelection& selection,
                                const std::vector<NodeDataset>& datasets,
                                const NodeMetrics* metrics) {
  const std::vector<int> eligible = nodes_with_data(datasets);
  if (eligible.empty()) throw std::runtime_error("select_victims: no node has data");

  switch (selection.metric) {
    case SelectionMetric::kAll:
      return eligible;
    case SelectionMetric::kExplicit: {
      for (const int id : selection.explicit_nodes)
        if (std::find(eligible.begin(), eligible.end(), id) == eligible.end())
          throw std::invalid_argument("select_victims: node " + std::to_string(id) +
                                      " has no data");
      std::vector<int> sorted = selection.explicit_nodes;
      std::sort(sorted.begin(), sorted.end());
      sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
      return sorted;
    }
    case SelectionMetric::kDegree:
    case SelectionMetric::kComponentSize:
    case SelectionMetric::kConnectedRatio:
      break;
  }
  if (metrics == nullptr)
    throw std::invalid_argument("select_victims: metric-based selection requires node metrics");
  const Eigen::VectorXd& values = selection.metric == SelectionMetric::kDegree
                                      ? metrics->in_degree
                                      : selection.metric == SelectionMetric::kComponentSize
                                            ? metrics->component_size
                                            : metrics->connected_ratio;
  return top_k(values, selection.k, eligible);
}

AttackResult poison_targeted(const std::vector<NodeDataset>& datasets,
                             const TargetedAttackSpec& spec, const NodeMetrics* metrics) {
  if (spec.p_a < 0.0 || spec.p_a > 1.0) throw std::invalid_argument("p_a must be in [0, 1]");

  AttackResult result;
  result.datasets = datasets;
  const std::vector<int> victims = select_victims(spec.selection, datasets, metrics);

  for (const int node : victims) {
    auto& d = *std::find_if(result.datasets.begin(), result.datasets.end(),
                            [&](const NodeDataset& x) { return x.node_id == node; });
    Rng rng(derive_seed(spec.seed, "flip", static_cast<std::uint64_t>(node)));
    std::vector<PoisonedSample> touched;
    for (auto& s : d.train) {
      if (s.label != Label::kMalicious) continue;
      if (!rng.bernoulli(spec.p_a)) continue;
      touched.push_back({s.sample_id, PoisonChange::kLabelFlip, s.label, 0.0, 0.0});
      s.label = Label::kBenign;
    }
    if (!touched.empty()) result.record.by_node[node] = std::move(touched);
  }
  return result;
}

AttackResult implant_backdoor(const std::vector<NodeDataset>& datasets,
                              const BackdoorAttackSpec& spec,
                              const std::vector<Standardizer>& standardizers,
                              const NodeMetrics* metrics) {
  if (spec.selection_ratio < 0.0 || spec.selection_ratio > 1.0)
    throw std::invalid_argument("selection_ratio must be in [0, 1]");

  AttackResult result;
  result.datasets = datasets;
  const std::vector<int> attacked = select_victims(spec.selection, datasets, metrics);

  for (const int node : attacked) {
    auto& d = *std::find_if(result.datasets.begin(), result.datasets.end(),
                            [&](const NodeDataset& x) { return x.node_id == node; });
    const Standardizer* std_params = find_standardizer(standardizers, node);

    const std::size_t n = d.train.size();
    const auto count = static_cast<std::size_t>(
        std::ceil(spec.selection_ratio * static_cast<double>(n)));
    if (count == 0) continue;

    // Rank by raw distance to the trigger, furthest first; ties by
    // ascending sample id.
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      double raw1 = d.train[i].features[kPos1Index];
      double raw2 = d.train[i].features[kPos2Index];
      if (std_params != nullptr) {
        raw1 = std_params->to_raw(kPos1Index, raw1);
        raw2 = std_params->to_raw(kPos2Index, raw2);
      }
      const double dist = std::hypot(raw1 - spec.trigger_pos1, raw2 - spec.trigger_pos2);
      ranked.emplace_back(dist, i);
    }
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return d.train[a.second].sample_id < d.train[b.second].sample_id;
    });

    double trig1 = spec.trigger_pos1;
    double trig2 = spec.trigger_pos2;
    if (std_params != nullptr) {
      trig1 = std_params->to_standardized(kPos1Index, spec.trigger_pos1);
      trig2 = std_params->to_standardized(kPos2Index, spec.trigger_pos2);
    }

    std::vector<PoisonedSample> touched;
    touched.reserve(count);
    for (std::size_t r = 0; r < count; ++r) {
      Sample& s = d.train[ranked[r].second];
      touched.push_back({s.sample_id, PoisonChange::kTriggerAndLabel, s.label,
                         s.features[kPos1Index], s.features[kPos2Index]});
      s.features[kPos1Index] = trig1;
      s.features[kPos2Index] = trig2;
      s.label = Label::kBenign;
    }
    std::sort(touched.begin(), touched.end(),
              [](const PoisonedSample& a, const PoisonedSample& b) {
                return a.sample_id < b.sample_id;
              });
    result.record.by_node[node] = std::move(touched);
  }
  return result;
}

std::vector<Sample> activate_backdoor(const std::vector<Sample>& test,
                                      const BackdoorAttackSpec& spec,
                                      const Standardizer* standardizer) {
  double trig1 = spec.trigger_pos1;
  double trig2 = spec.trigger_pos2;
  if (standardizer != nullptr) {
    trig1 = standardizer->to_standardized(kPos1Index, spec.trigger_pos1);
    trig2 = standardizer->to_standardized(kPos2Index, spec.trigger_pos2);
  }
  std::vector<Sample> triggered;
  for (const auto& s : test) {
    if (s.label != Label::kMalicious) continue;
    Sample copy = s;
    copy.features[kPos1Index] = trig1;
    copy.features[kPos2Index] = trig2;
    triggered.push_back(std::move(copy));
  }
  if (triggered.empty()) throw std::runtime_error("activate_backdoor: nothing to trigger");
  return triggered;
}

std::vector<NodeDataset> revert_poison(const std::vector<NodeDataset>& datasets,
                                       const PoisonRecord& record) {
  std::vector<NodeDataset> restored = datasets;
  for (auto& d : restored) {
    const auto it = record.by_node.find(d.node_id);
    if (it == record.by_node.end()) continue;
    std::unordered_map<std::int64_t, Sample*> by_id;
    for (auto& s : d.train) by_id[s.sample_id] = &s;
    for (const auto& e : it->second) {
      const auto found = by_id.find(e.sample_id);
      if (found == by_id.end())
        throw std::invalid_argument("revert_poison: sample " + std::to_string(e.sample_id) +
                                    " not found on node " + std::to_string(d.node_id));
      Sample& s = *found->second;
      s.label = e.original_label;
      if (e.change == PoisonChange::kTriggerAndLabel) {
        s.features[kPos1Index] = e.original_pos1;
        s.features[kPos2Index] = e.original_pos2;
      }
    }
  }
  return restored;
}

void save_poison_record_json(const PoisonRecord& record, const std::filesystem::path& path) {
  json j = json::object();
  for (const auto& [node, entries] : record.by_node) {
    json list = json::array();
    for (const auto& e : entries) {
      list.push_back({{"sample_id", e.sample_id},
                      {"change", e.change == PoisonChange::kLabelFlip ? "label_flip"
                                                                      : "trigger_and_label"},
                      {"original_label", std::string(1, label_char(e.original_label))},
                      {"original_pos1", e.original_pos1},
                      {"original_pos2", e.original_pos2}});
    }
    j[std::to_string(node)] = std::move(list);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write poison record: " + path.string());
  out << j.dump(2) << '\n';
}

PoisonRecord load_poison_record_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read poison record: " + path.string());
  json j;
  in >> j;
  PoisonRecord record;
  for (const auto& [key, list] : j.items()) {
    std::vector<PoisonedSample> entries;
    for (const auto& e : list) {
      PoisonedSample p;
      p.sample_id = e.at("sample_id").get<std::int64_t>();
      p.change = e.at("change").get<std::string>() == "label_flip"
                     ? PoisonChange::kLabelFlip
                     : PoisonChange::kTriggerAndLabel;
      p.original_label = e.at("original_label").get<std::string>() == "M" ? Label::kMalicious
                                                                          : Label::kBenign;
      p.original_pos1 = e.at("original_pos1").get<double>();
      p.original_pos2 = e.at("original_pos2").get<double>();
      entries.push_back(p);
    }
    record.by_node[std::stoi(key)] = std::move(entries);
  }
  return record;
}

}  // namespace dflsim
