#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "dflsim/dataset.hpp"
#include "dflsim/sample.hpp"
#include "dflsim/topology.hpp"

namespace dflsim {

enum class SelectionMetric {
  kDegree,          // TopK by mean incoming degree
  kComponentSize,   // TopK by mean connected-component size
  kConnectedRatio,  // TopK by connected-time ratio
  kExplicit,        // a fixed node set
  kAll,             // every node with data
};

// Which nodes an adversary (or sweep) targets. Only nodes with data are
// eligible.
struct NodeSelection {
  SelectionMetric metric = SelectionMetric::kAll;
  int k = 1;
  std::vector<int> explicit_nodes;
};

std::vector<int> select_victims(const NodeSelection& selection,
                                const std::vector<NodeDataset>& datasets,
                                const NodeMetrics* metrics);

// Label flip M -> B with probability p_a on each victim's train samples.
struct TargetedAttackSpec {
  NodeSelection selection;
  double p_a = 0.0;
  std::uint64_t seed = 0;
};

// Position trigger: the furthest ceil(ratio * n) train samples of each
// attacked node are moved to the trigger location and labeled B.
struct BackdoorAttackSpec {
  double trigger_pos1 = 0.0;  // raw meters
  double trigger_pos2 = 0.0;
  double selection_ratio = 0.0;
  NodeSelection selection;
  std::uint64_t seed = 0;
};

enum class PoisonChange { kLabelFlip, kTriggerAndLabel };

struct PoisonedSample {
  std::int64_t sample_id = 0;
  PoisonChange change = PoisonChange::kLabelFlip;
  Label original_label = Label::kMalicious;
  // Stored-space position values, kept so reverts are bit-exact.
  double original_pos1 = 0.0;
  double original_pos2 = 0.0;
};

// Ground truth of what the adversary touched, keyed by node.
struct PoisonRecord {
  std::map<int, std::vector<PoisonedSample>> by_node;

  bool empty() const;
  std::size_t total_poisoned() const;
  bool is_attacked(int node_id, std::int64_t sample_id) const;
  // The pre-attack label: the recorded original if attacked, else current.
  Label original_label(int node_id, std::int64_t sample_id, Label current) const;
};

struct AttackResult {
  std::vector<NodeDataset> datasets;
  PoisonRecord record;
};

AttackResult poison_targeted(const std::vector<NodeDataset>& datasets,
                             const TargetedAttackSpec& spec, const NodeMetrics* metrics);

// standardizers may be empty when the datasets hold raw values; otherwise
// raw distances are recovered through each node's recorded transform and
// the trigger is written in standardized coordinates.
AttackResult implant_backdoor(const std::vector<NodeDataset>& datasets,
                              const BackdoorAttackSpec& spec,
                              const std::vector<Standardizer>& standardizers,
                              const NodeMetrics* metrics = nullptr);

// Test-time activation: the M-labeled test samples with positions forced
// to the trigger. Labels stay M.
std::vector<Sample> activate_backdoor(const std::vector<Sample>& test,
                                      const BackdoorAttackSpec& spec,
                                      const Standardizer* standardizer);

// Inverse application of a record; restores the clean datasets bit-exactly.
std::vector<NodeDataset> revert_poison(const std::vector<NodeDataset>& datasets,
                                       const PoisonRecord& record);

void save_poison_record_json(const PoisonRecord& record, const std::filesystem::path& path);
PoisonRecord load_poison_record_json(const std::filesystem::path& path);

}  // namespace dflsim
