#pragma once

#include <optional>
#include <vector>

#include "dflsim/metrics.hpp"
#include "dflsim/model.hpp"
#include "dflsim/sample.hpp"
#include "dflsim/topology.hpp"

namespace dflsim {

enum class LearningMode { kDfl, kIndividual };

// What nodes without data do: Relay nodes hold a model, share it and
// aggregate what they hear; Exclude keeps them out of the exchange.
enum class DatalessPolicy { kRelay, kExclude };

struct DflConfig {
  int rounds = 50;
  TrainConfig train;
  LearningMode mode = LearningMode::kDfl;
  DatalessPolicy dataless_policy = DatalessPolicy::kRelay;
  bool record_history = true;
};

struct RoundStats {
  // One entry per node; nodes without test data have no stats.
  std::vector<std::optional<ConfusionStats>> per_node;
};

struct NetworkState {
  std::vector<ModelParams> models;  // one per node
  int round_index = 0;
  std::vector<RoundStats> history;
};

// Elementwise unweighted mean over {own} followed by received. With no
// received models the own model is returned unchanged.
ModelParams aggregate(const ModelParams& own, const std::vector<ModelParams>& received);

ModelParams initial_model_for_node(const DflConfig& cfg, int node);
TrainConfig train_config_for(const DflConfig& cfg, int node, int round);

// One synchronous round: local training on every node with data, exchange
// along the given adjacency step, then per-node averaging. The input state
// is not modified.
NetworkState run_round(const NetworkState& state, const BoolMatrix& step_adjacency,
                       const std::vector<NodeDataset>& datasets, const DflConfig& cfg);

// Runs cfg.rounds rounds, cycling through the timeline steps.
NetworkState run_dfl(const std::vector<NodeDataset>& datasets, const AdjacencyTimeline& timeline,
                     const DflConfig& cfg);

}  // namespace dflsim
