#include "dflsim/topology.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dflsim/rng.hpp"

namespace dflsim {

namespace {

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(b)] = a;
  }
};

void validate(const AdjacencyTimeline& t) {
  if (t.node_count < 1) throw std::invalid_argument("timeline must have at least 1 node");
  if (t.steps.empty()) throw std::invalid_argument("timeline must have at least 1 step");
  for (const auto& m : t.steps) {
    if (m.rows() != t.node_count || m.cols() != t.node_count)
      throw std::invalid_argument("timeline step matrix has wrong dimensions");
    for (int i = 0; i < t.node_count; ++i)
      if (m(i, i)) throw std::invalid_argument("timeline step has a true diagonal entry");
  }
}

}  // namespace

AdjacencyTimeline generate_random_timeline(int node_count, int steps, double edge_probability,
                                           std::uint64_t seed) {
  if (node_count < 1) throw std::invalid_argument("node_count must be >= 1");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (edge_probability < 0.0 || edge_probability > 1.0)
    throw std::invalid_argument("edge_probability must be in [0, 1]");

  AdjacencyTimeline t;
  t.node_count = node_count;
  t.steps.reserve(static_cast<std::size_t>(steps));
  Rng rng(seed);
  for (int s = 0; s < steps; ++s) {
    BoolMatrix m = BoolMatrix::Constant(node_count, node_count, false);
    for (int i = 0; i < node_count; ++i)
      for (int j = 0; j < node_count; ++j)
        if (i != j) m(i, j) = rng.bernoulli(edge_probability);
    t.steps.push_back(std::move(m));
  }
  return t;
}

AdjacencyTimeline load_timeline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read timeline file: " + path.string());

  AdjacencyTimeline t;
  std::string line;
  int current_step = -1;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;  // blank line
    if (word == "nodes") {
      if (!(ss >> t.node_count) || t.node_count < 1)
        throw std::runtime_error("line " + std::to_string(line_no) + ": invalid node count");
    } else if (word == "step") {
      int index = 0;
      if (!(ss >> index) || index != current_step + 1)
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": steps must be consecutive starting at 0");
      if (t.node_count < 1)
        throw std::runtime_error("timeline must declare 'nodes <n>' before the first step");
      ++current_step;
      t.steps.emplace_back(BoolMatrix::Constant(t.node_count, t.node_count, false));
    } else {
      if (current_step < 0)
        throw std::runtime_error("line " + std::to_string(line_no) + ": edge before first step");
      int src = 0, dst = 0;
      std::istringstream edge(line);
      if (!(edge >> src >> dst))
        throw std::runtime_error("line " + std::to_string(line_no) + ": expected 'src dst'");
      if (src < 0 || src >= t.node_count || dst < 0 || dst >= t.node_count || src == dst)
        throw std::runtime_error("step " + std::to_string(current_step) + ": edge (" +
                                 std::to_string(src) + ", " + std::to_string(dst) +
                                 ") is out of range for " + std::to_string(t.node_count) +
                                 " nodes");
      t.steps.back()(dst, src) = true;  // dst hears src
    }
  }
  if (t.steps.empty()) throw std::runtime_error("timeline file has no steps: " + path.string());
  return t;
}

void save_timeline(const AdjacencyTimeline& t, const std::filesystem::path& path) {
  validate(t);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write timeline file: " + path.string());
  out << "nodes " << t.node_count << '\n';
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    out << "step " << s << '\n';
    for (int dst = 0; dst < t.node_count; ++dst)
      for (int src = 0; src < t.node_count; ++src)
        if (t.steps[s](dst, src)) out << src << ' ' << dst << '\n';
  }
}

NodeMetrics compute_metrics(const AdjacencyTimeline& t) {
  validate(t);
  const int n = t.node_count;
  const auto steps = static_cast<double>(t.steps.size());

  NodeMetrics m;
  m.in_degree = Eigen::VectorXd::Zero(n);
  m.component_size = Eigen::VectorXd::Zero(n);
  m.connected_ratio = Eigen::VectorXd::Zero(n);

  for (const auto& adj : t.steps) {
    UnionFind uf(n);
    for (int i = 0; i < n; ++i) {
      int degree = 0;
      bool connected = false;
      for (int j = 0; j < n; ++j) {
        if (adj(i, j)) {
          ++degree;
          connected = true;
          uf.unite(i, j);
        }
        if (adj(j, i)) connected = true;
      }
      m.in_degree[i] += degree;
      if (connected) m.connected_ratio[i] += 1.0;
    }
    std::vector<int> component_count(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) ++component_count[static_cast<std::size_t>(uf.find(i))];
    for (int i = 0; i < n; ++i)
      m.component_size[i] += component_count[static_cast<std::size_t>(uf.find(i))];
  }
  m.in_degree /= steps;
  m.component_size /= steps;
  m.connected_ratio /= steps;
  return m;
}

std::vector<int> top_k(const Eigen::VectorXd& values, int k, const std::vector<int>& eligible) {
  if (k < 1) throw std::invalid_argument("top_k: k must be >= 1");
  if (static_cast<std::size_t>(k) > eligible.size())
    throw std::invalid_argument("top_k: k exceeds eligible node count");
  for (const int id : eligible)
    if (id < 0 || id >= values.size())
      throw std::invalid_argument("top_k: eligible node " + std::to_string(id) + " out of range");

  std::vector<int> sorted = eligible;
  std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  sorted.resize(static_cast<std::size_t>(k));
  std::sort(sorted.begin(), sorted.end());
  return sorted;
}

}  // namespace dflsim
