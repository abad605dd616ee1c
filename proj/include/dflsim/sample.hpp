#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace dflsim {

inline constexpr int kFeatureCount = 22;
// Canonical feature layout: f02/f03 carry the x/y position in meters.
inline constexpr int kPos1Index = 2;
inline constexpr int kPos2Index = 3;

enum class Label : std::uint8_t { kBenign = 0, kMalicious = 1 };

inline char label_char(Label l) { return l == Label::kMalicious ? 'M' : 'B'; }

// One BSM-derived feature vector with its ground-truth label.
struct Sample {
  Eigen::VectorXd features;  // size kFeatureCount
  Label label = Label::kBenign;
  int node_id = 0;
  std::int64_t sample_id = 0;
};

struct NodeDataset {
  int node_id = 0;
  std::vector<Sample> train;
  std::vector<Sample> test;
  bool standardized = false;

  bool has_data() const { return !train.empty() && !test.empty(); }
};

inline std::vector<int> nodes_with_data(const std::vector<NodeDataset>& datasets) {
  std::vector<int> ids;
  for (const auto& d : datasets)
    if (d.has_data()) ids.push_back(d.node_id);
  return ids;
}

}  // namespace dflsim
