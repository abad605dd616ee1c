#include "dflsim/dfl.hpp"

#include <stdexcept>

#include "dflsim/rng.hpp"

namespace dflsim {

namespace {

// Mean over the given models, accumulated in list order. Callers pass a
// canonical (node-id ascending) order so every node computes bit-identical
// aggregates for the same contributor set.
ModelParams mean_models(const std::vector<const ModelParams*>& models) {
  ModelParams result = *models.front();
  for (std::size_t m = 1; m < models.size(); ++m) {
    if (!result.same_shape(*models[m]))
      throw std::invalid_argument("aggregate: model dimension mismatch");
    for (std::size_t l = 0; l < result.layers.size(); ++l) {
      result.layers[l].weights += models[m]->layers[l].weights;
      result.layers[l].bias += models[m]->layers[l].bias;
    }
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (auto& layer : result.layers) {
    layer.weights *= inv;
    layer.bias *= inv;
  }
  return result;
}

}  // namespace

ModelParams aggregate(const ModelParams& own, const std::vector<ModelParams>& received) {
  if (received.empty()) return own;
  std::vector<const ModelParams*> models;
  models.reserve(received.size() + 1);
  models.push_back(&own);
  for (const auto& m : received) models.push_back(&m);
  return mean_models(models);
}

// All nodes start from one shared initialization; averaging independently
// initialized ReLU networks cancels their features and collapses the
// consensus model to the majority class.
ModelParams initial_model_for_node(const DflConfig& cfg, int node) {
  (void)node;
  return init_model(derive_seed(cfg.train.seed, "init"));
}

TrainConfig train_config_for(const DflConfig& cfg, int node, int round) {
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.train.seed, "train", static_cast<std::uint64_t>(node),
                        static_cast<std::uint64_t>(round));
  return tc;
}

NetworkState run_round(const NetworkState& state, const BoolMatrix& step_adjacency,
                       const std::vector<NodeDataset>& datasets, const DflConfig& cfg) {
  const int n = static_cast<int>(state.models.size());
  if (static_cast<int>(datasets.size()) != n)
    throw std::invalid_argument("run_round: datasets and models disagree on node count");
  if (cfg.mode == LearningMode::kDfl &&
      (step_adjacency.rows() != n || step_adjacency.cols() != n))
    throw std::invalid_argument("run_round: adjacency step has wrong dimensions");

  // Phase 1: local training.
  std::vector<ModelParams> trained(state.models);
  for (int i = 0; i < n; ++i) {
    const auto& d = datasets[static_cast<std::size_t>(i)];
    if (!d.train.empty())
      trained[static_cast<std::size_t>(i)] =
          train_local(state.models[static_cast<std::size_t>(i)], d.train,
                      train_config_for(cfg, i, state.round_index));
  }

  NetworkState next;
  next.round_index = state.round_index + 1;
  next.history = state.history;
  next.models.reserve(static_cast<std::size_t>(n));

  // Phase 2+3: exchange along this step and average. Individual mode skips
  // the exchange entirely.
  for (int i = 0; i < n; ++i) {
    const bool participates =
        cfg.dataless_policy == DatalessPolicy::kRelay || datasets[static_cast<std::size_t>(i)].has_data();
    if (cfg.mode == LearningMode::kIndividual || !participates) {
      next.models.push_back(trained[static_cast<std::size_t>(i)]);
      continue;
    }
    std::vector<const ModelParams*> contributors;
    for (int j = 0; j < n; ++j) {
      const bool from_j =
          j == i || (step_adjacency(i, j) &&
                     (cfg.dataless_policy == DatalessPolicy::kRelay ||
                      datasets[static_cast<std::size_t>(j)].has_data()));
      if (from_j) contributors.push_back(&trained[static_cast<std::size_t>(j)]);
    }
    next.models.push_back(mean_models(contributors));
  }

  if (cfg.record_history) {
    RoundStats stats;
    stats.per_node.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto& d = datasets[static_cast<std::size_t>(i)];
      if (!d.test.empty())
        stats.per_node[static_cast<std::size_t>(i)] =
            confusion(next.models[static_cast<std::size_t>(i)], d.test);
    }
    next.history.push_back(std::move(stats));
  }
  return next;
}

NetworkState run_dfl(const std::vector<NodeDataset>& datasets, const AdjacencyTimeline& timeline,
                     const DflConfig& cfg) {
  if (cfg.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  const int n = static_cast<int>(datasets.size());
  if (timeline.node_count != n)
    throw std::invalid_argument("run_dfl: timeline node count does not match datasets");
  bool any_data = false;
  for (const auto& d : datasets) any_data = any_data || d.has_data();
  if (!any_data) throw std::runtime_error("run_dfl: no node has data");

  NetworkState state;
  state.models.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) state.models.push_back(initial_model_for_node(cfg, i));

  for (int round = 0; round < cfg.rounds; ++round) {
    const auto& step = timeline.steps[static_cast<std::size_t>(round) % timeline.steps.size()];
    state = run_round(state, step, datasets, cfg);
  }
  return state;
}

}  // namespace dflsim
