#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "dflsim/sample.hpp"

namespace dflsim {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Time-indexed directed adjacency; entry (i, j) true means j -> i delivery
// (node i hears node j). Diagonal is always false.
struct AdjacencyTimeline {
  int node_count = 0;
  std::vector<BoolMatrix> steps;
};

// Per-node ranking metrics over the whole timeline:
//   in_degree      mean number of incoming connections
//   component_size mean size of the node's connected component (undirected
//                  support of each step; a singleton counts as 1)
//   connected_ratio fraction of steps with at least one incident edge
struct NodeMetrics {
  Eigen::VectorXd in_degree;
  Eigen::VectorXd component_size;
  Eigen::VectorXd connected_ratio;
};

AdjacencyTimeline generate_random_timeline(int node_count, int steps, double edge_probability,
                                           std::uint64_t seed);

// Plain-text format:
//   nodes <n>
//   step 0
//   <src> <dst>
//   ...
//   step 1
//   ...
// An edge line `src dst` means dst hears src. Steps may be empty.
AdjacencyTimeline load_timeline(const std::filesystem::path& path);
void save_timeline(const AdjacencyTimeline& timeline, const std::filesystem::path& path);

NodeMetrics compute_metrics(const AdjacencyTimeline& timeline);

// The k eligible nodes with the largest values; ties broken by ascending
// node id. Returns ids in ascending order.
std::vector<int> top_k(const Eigen::VectorXd& values, int k, const std::vector<int>& eligible);

}  // namespace dflsim
