#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "imold/graph.hpp"

namespace imold::testing {

inline Graph make_graph(std::string id, std::vector<int> types,
                        std::vector<std::array<int, 2>> edges, double label = 0.0,
                        Split split = Split::train) {
  Graph g;
  g.id = std::move(id);
  g.num_nodes = static_cast<int>(types.size());
  g.node_types = std::move(types);
  g.edges = std::move(edges);
  g.label = {label};
  g.split = split;
  return g;
}

// Random connected graph: a random tree plus up to `extra` chords.
inline Graph random_graph(std::mt19937_64& rng, const std::string& id, int n, int types,
                          int extra = 2) {
  std::uniform_int_distribution<int> type(0, types - 1);
  Graph g;
  g.id = id;
  g.num_nodes = n;
  for (int v = 0; v < n; ++v) g.node_types.push_back(type(rng));
  for (int v = 1; v < n; ++v) {
    g.edges.push_back({std::uniform_int_distribution<int>(0, v - 1)(rng), v});
  }
  for (int i = 0; i < extra && n > 2; ++i) {
    int a = std::uniform_int_distribution<int>(0, n - 1)(rng);
    int b = std::uniform_int_distribution<int>(0, n - 1)(rng);
    if (a == b) continue;
    std::array<int, 2> e{std::min(a, b), std::max(a, b)};
    if (std::find(g.edges.begin(), g.edges.end(), e) == g.edges.end()) g.edges.push_back(e);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.label = {static_cast<double>(std::bernoulli_distribution(0.5)(rng))};
  return g;
}

// Relabels node v as perm[v].
inline Graph permute_graph(const Graph& g, const std::vector<int>& perm) {
  Graph p = g;
  for (int v = 0; v < g.num_nodes; ++v) p.node_types[static_cast<std::size_t>(perm[v])] = g.node_types[v];
  p.edges.clear();
  for (auto [u, v] : g.edges) {
    int a = perm[u], b = perm[v];
    p.edges.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(p.edges.begin(), p.edges.end());
  return p;
}

inline std::vector<int> random_permutation(std::mt19937_64& rng, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

inline std::vector<const Graph*> pointers(const std::vector<Graph>& graphs) {
  std::vector<const Graph*> out;
  for (const Graph& g : graphs) out.push_back(&g);
  return out;
}

}  // namespace imold::testing
