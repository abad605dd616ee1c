#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <queue>

#include "dflsim/rng.hpp"
#include "dflsim/topology.hpp"

using namespace dflsim;

namespace {

// Independent oracle: component sizes by BFS flood fill on the undirected
// support, metrics recomputed from first principles.
NodeMetrics brute_force_metrics(const AdjacencyTimeline& t) {
  const int n = t.node_count;
  NodeMetrics m;
  m.in_degree = Eigen::VectorXd::Zero(n);
  m.component_size = Eigen::VectorXd::Zero(n);
  m.connected_ratio = Eigen::VectorXd::Zero(n);
  for (const auto& adj : t.steps) {
    for (int i = 0; i < n; ++i) {
      int deg = 0;
      bool any = false;
      for (int j = 0; j < n; ++j) {
        if (adj(i, j)) deg++;
        if (adj(i, j) || adj(j, i)) any = true;
      }
      m.in_degree[i] += deg;
      if (any) m.connected_ratio[i] += 1.0;

      // BFS from i over undirected support.
      std::vector<bool> visited(static_cast<std::size_t>(n), false);
      std::queue<int> queue;
      queue.push(i);
      visited[static_cast<std::size_t>(i)] = true;
      int size = 0;
      while (!queue.empty()) {
        const int u = queue.front();
        queue.pop();
        ++size;
        for (int v = 0; v < n; ++v) {
          if (!visited[static_cast<std::size_t>(v)] && (adj(u, v) || adj(v, u))) {
            visited[static_cast<std::size_t>(v)] = true;
            queue.push(v);
          }
        }
      }
      m.component_size[i] += size;
    }
  }
  const auto steps = static_cast<double>(t.steps.size());
  m.in_degree /= steps;
  m.component_size /= steps;
  m.connected_ratio /= steps;
  return m;
}

}  // namespace

TEST_CASE("random timeline honors edge probability extremes and seed") {
  const auto empty = generate_random_timeline(4, 3, 0.0, 1);
  for (const auto& step : empty.steps) CHECK_FALSE(step.any());

  const auto full = generate_random_timeline(4, 3, 1.0, 1);
  for (const auto& step : full.steps)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(step(i, j) == (i != j));

  const auto a = generate_random_timeline(6, 5, 0.4, 9);
  const auto b = generate_random_timeline(6, 5, 0.4, 9);
  for (std::size_t s = 0; s < a.steps.size(); ++s) CHECK(a.steps[s] == b.steps[s]);
}

TEST_CASE("hand-enumerated two-step metrics") {
  // step 0: node 0 hears node 1; step 1: empty.
  AdjacencyTimeline t;
  t.node_count = 3;
  t.steps.assign(2, BoolMatrix::Constant(3, 3, false));
  t.steps[0](0, 1) = true;

  const NodeMetrics m = compute_metrics(t);
  CHECK(m.in_degree[0] == 0.5);
  CHECK(m.in_degree[1] == 0.0);
  CHECK(m.in_degree[2] == 0.0);
  CHECK(m.component_size[0] == 1.5);
  CHECK(m.component_size[1] == 1.5);
  CHECK(m.component_size[2] == 1.0);
  CHECK(m.connected_ratio[0] == 0.5);
  CHECK(m.connected_ratio[1] == 0.5);
  CHECK(m.connected_ratio[2] == 0.0);
}

TEST_CASE("fully connected and empty timelines") {
  const int n = 5;
  const auto full = generate_random_timeline(n, 2, 1.0, 1);
  const NodeMetrics mf = compute_metrics(full);
  for (int i = 0; i < n; ++i) {
    CHECK(mf.in_degree[i] == n - 1);
    CHECK(mf.component_size[i] == n);
    CHECK(mf.connected_ratio[i] == 1.0);
  }
  const auto empty = generate_random_timeline(n, 2, 0.0, 1);
  const NodeMetrics me = compute_metrics(empty);
  for (int i = 0; i < n; ++i) {
    CHECK(me.in_degree[i] == 0.0);
    CHECK(me.component_size[i] == 1.0);
    CHECK(me.connected_ratio[i] == 0.0);
  }
}

TEST_CASE("metrics match the brute-force oracle on random small graphs") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(5));     // <= 6 nodes
    const int steps = 1 + static_cast<int>(rng.uniform_int(4)); // <= 4 steps
    const auto t = generate_random_timeline(n, steps, rng.uniform(), 1000 + trial);
    const NodeMetrics ours = compute_metrics(t);
    const NodeMetrics oracle = brute_force_metrics(t);
    CHECK(ours.in_degree == oracle.in_degree);
    CHECK(ours.component_size == oracle.component_size);
    CHECK(ours.connected_ratio == oracle.connected_ratio);
  }
}

TEST_CASE("metric bounds hold on random timelines") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(10));
    const auto t = generate_random_timeline(n, 3, rng.uniform(), 50 + trial);
    const NodeMetrics m = compute_metrics(t);
    for (int i = 0; i < n; ++i) {
      CHECK(m.in_degree[i] >= 0.0);
      CHECK(m.in_degree[i] <= n - 1);
      CHECK(m.component_size[i] >= 1.0);
      CHECK(m.component_size[i] <= n);
      CHECK(m.connected_ratio[i] >= 0.0);
      CHECK(m.connected_ratio[i] <= 1.0);
    }
  }
}

TEST_CASE("timeline file round-trip and validation") {
  const auto path = std::filesystem::temp_directory_path() / "dflsim_timeline.txt";
  {
    std::ofstream out(path);
    out << "nodes 3\nstep 0\n1 0\n2 1\nstep 1\n";
  }
  const AdjacencyTimeline t = load_timeline(path);
  CHECK(t.node_count == 3);
  REQUIRE(t.steps.size() == 2);
  CHECK(t.steps[0](0, 1));  // node 0 hears node 1
  CHECK(t.steps[0](1, 2));
  CHECK_FALSE(t.steps[1].any());  // empty step section

  save_timeline(t, path);
  const AdjacencyTimeline again = load_timeline(path);
  for (std::size_t s = 0; s < t.steps.size(); ++s) CHECK(t.steps[s] == again.steps[s]);

  {
    std::ofstream out(path);
    out << "nodes 3\nstep 0\n5 1\n";
  }
  CHECK_THROWS_WITH_AS(load_timeline(path),
                       "step 0: edge (5, 1) is out of range for 3 nodes", std::runtime_error);
  {
    std::ofstream out(path);
    out << "";
  }
  CHECK_THROWS_AS(load_timeline(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("top_k ordering, ties and nesting") {
  Eigen::VectorXd values(3);
  values << 3, 1, 2;
  const std::vector<int> all{0, 1, 2};
  CHECK(top_k(values, 2, all) == std::vector<int>{0, 2});
  CHECK(top_k(values, 3, all) == all);

  Eigen::VectorXd equal = Eigen::VectorXd::Ones(4);
  CHECK(top_k(equal, 2, {0, 1, 2, 3}) == std::vector<int>{0, 1});

  CHECK_THROWS_AS(top_k(values, 4, all), std::invalid_argument);

  // Nesting: top_k(v, k) subset of top_k(v, k+1).
  Rng rng(31);
  Eigen::VectorXd v(8);
  for (int i = 0; i < 8; ++i) v[i] = rng.uniform_int(4);  // force ties
  const std::vector<int> eligible{0, 1, 2, 3, 4, 5, 6, 7};
  for (int k = 1; k < 8; ++k) {
    const auto small = top_k(v, k, eligible);
    const auto big = top_k(v, k + 1, eligible);
    for (const int id : small) CHECK(std::find(big.begin(), big.end(), id) != big.end());
  }
}
