#include "imold/synth.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace imold {

using nlohmann::json;

namespace {

Motif uniform(std::string name, int type, int n, std::vector<std::array<int, 2>> edges) {
  return Motif{std::move(name), std::vector<int>(static_cast<std::size_t>(n), type),
               std::move(edges)};
}

const std::map<std::string, std::function<Motif()>>& registry() {
  static const std::map<std::string, std::function<Motif()>> motifs = {
      // Invariant pair: same type multiset, different wiring. The two
      // type-0 nodes are apart on the cycle and adjacent in the house, so
      // neither contains the other as a typed subgraph.
      {"cycle5", [] { return Motif{"cycle5", {0, 1, 0, 1, 1}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}}}; }},
      {"house", [] {
         return Motif{"house", {0, 1, 1, 1, 0}, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 4}, {1, 4}}};
       }},
      {"star_a", [] { return uniform("star_a", 2, 4, {{0, 1}, {0, 2}, {0, 3}}); }},
      {"star_b", [] { return uniform("star_b", 3, 4, {{0, 1}, {0, 2}, {0, 3}}); }},
      {"path_a", [] { return uniform("path_a", 2, 4, {{0, 1}, {1, 2}, {2, 3}}); }},
      {"path_b", [] { return uniform("path_b", 3, 4, {{0, 1}, {1, 2}, {2, 3}}); }},
      {"triangle_a", [] { return uniform("triangle_a", 2, 3, {{0, 1}, {1, 2}, {0, 2}}); }},
      {"triangle_b", [] { return uniform("triangle_b", 3, 3, {{0, 1}, {1, 2}, {0, 2}}); }},
      {"ladder_a", [] {
         return uniform("ladder_a", 2, 6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}, {0, 3}, {1, 4}, {2, 5}});
       }},
      {"ladder_b", [] {
         return uniform("ladder_b", 3, 6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}, {0, 3}, {1, 4}, {2, 5}});
       }},
      {"cycle4_ab", [] { return Motif{"cycle4_ab", {2, 3, 2, 3}, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}}; }},
      {"k4_a", [] { return uniform("k4_a", 2, 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}); }},
      {"k4_b", [] { return uniform("k4_b", 3, 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}); }},
  };
  return motifs;
}

bool connected(const Motif& m) {
  if (m.size() == 0) return false;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(m.size()));
  for (const auto& e : m.edges) {
    adj[static_cast<std::size_t>(e[0])].push_back(e[1]);
    adj[static_cast<std::size_t>(e[1])].push_back(e[0]);
  }
  std::vector<bool> seen(adj.size(), false);
  std::vector<int> stack{0};
  seen[0] = true;
  int count = 0;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    ++count;
    for (int u : adj[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(u)]) {
        seen[static_cast<std::size_t>(u)] = true;
        stack.push_back(u);
      }
    }
  }
  return count == m.size();
}

void validate_motif(const Motif& m, const SynthSpec& spec) {
  if (m.size() == 0) throw SpecError("motif '" + m.name + "' is empty");
  for (int t : m.node_types) {
    if (t < 0 || t >= spec.node_type_count) {
      throw SpecError("motif '" + m.name + "' uses node type outside [0, node_type_count)");
    }
  }
  std::set<std::array<int, 2>> seen;
  for (auto e : m.edges) {
    if (e[0] < 0 || e[1] < 0 || e[0] >= m.size() || e[1] >= m.size() || e[0] == e[1]) {
      throw SpecError("motif '" + m.name + "' has an invalid edge");
    }
    if (e[0] > e[1]) std::swap(e[0], e[1]);
    if (!seen.insert(e).second) throw SpecError("motif '" + m.name + "' repeats an edge");
  }
  if (!connected(m)) throw SpecError("motif '" + m.name + "' is not connected");
  if (m.size() > spec.base_max) {
    throw SpecError("motif '" + m.name + "' (" + std::to_string(m.size()) +
                    " nodes) is larger than the base size range");
  }
}

Motif motif_from_json(const json& j) {
  if (j.is_string()) return builtin_motif(j.get<std::string>());
  Motif m;
  m.name = j.at("name").get<std::string>();
  m.node_types = j.at("node_types").get<std::vector<int>>();
  for (const auto& e : j.at("edges")) m.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  return m;
}

json motif_to_json(const Motif& m) {
  json edges = json::array();
  for (const auto& e : m.edges) edges.push_back({e[0], e[1]});
  return {{"name", m.name}, {"node_types", m.node_types}, {"edges", edges}};
}

std::vector<Motif> motifs_from_json(const json& j) {
  std::vector<Motif> out;
  for (const auto& m : j) out.push_back(motif_from_json(m));
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Appends `m` to the working graph and links one of its nodes to a base node.
void attach(std::vector<int>& types, std::vector<std::array<int, 2>>& edges, int base_nodes,
            const Motif& m, std::mt19937_64& rng) {
  const int offset = static_cast<int>(types.size());
  types.insert(types.end(), m.node_types.begin(), m.node_types.end());
  for (const auto& e : m.edges) edges.push_back({offset + e[0], offset + e[1]});
  std::uniform_int_distribution<int> pick_motif(0, m.size() - 1);
  std::uniform_int_distribution<int> pick_base(0, base_nodes - 1);
  edges.push_back({pick_base(rng), offset + pick_motif(rng)});
}

struct Draw {
  int label;
  const Motif* env;
};

Draw draw_label_and_env(const SynthSpec& spec, Split split, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  const int label = coin(rng) ? 1 : 0;

  auto pick = [&rng](const std::vector<const Motif*>& pool) {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  };
  auto correlated = [&](double rho) {
    std::vector<const Motif*> agree, disagree;
    for (std::size_t k = 0; k < spec.train_envs.size(); ++k) {
      (static_cast<int>(k % 2) == label ? agree : disagree).push_back(&spec.train_envs[k]);
    }
    std::bernoulli_distribution aligned(rho);
    return aligned(rng) ? pick(agree) : pick(disagree);
  };
  auto uniform_over = [&](const std::vector<Motif>& envs) {
    std::vector<const Motif*> pool;
    for (const Motif& m : envs) pool.push_back(&m);
    return pick(pool);
  };

  const double rho = spec.train_correlation;
  if (split == Split::train) return {label, correlated(rho)};
  if (spec.shift_kind == ShiftKind::concept_shift) {
    return {label, correlated(split == Split::val ? 0.5 : 1.0 - rho)};
  }
  if (split == Split::val) {
    return {label, spec.val_envs.empty() ? correlated(rho) : uniform_over(spec.val_envs)};
  }
  return {label, uniform_over(spec.test_envs)};
}

Graph make_graph(const SynthSpec& spec, Split split, int index, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Draw draw = draw_label_and_env(spec, split, rng);
    std::uniform_int_distribution<int> size_dist(spec.base_min, spec.base_max);
    std::uniform_int_distribution<std::size_t> type_dist(0, spec.base_types.size() - 1);
    const int n = size_dist(rng);

    std::vector<int> types;
    std::vector<std::array<int, 2>> edges;
    for (int v = 0; v < n; ++v) {
      types.push_back(spec.base_types[type_dist(rng)]);
      if (v > 0) {
        std::uniform_int_distribution<int> parent(0, v - 1);
        edges.push_back({parent(rng), v});
      }
    }
    const Motif& invariant = spec.invariant_motifs[static_cast<std::size_t>(draw.label)];
    const Motif& other = spec.invariant_motifs[static_cast<std::size_t>(1 - draw.label)];
    attach(types, edges, n, invariant, rng);
    attach(types, edges, n, *draw.env, rng);

    // Relabel nodes so motif positions carry no information.
    std::vector<int> perm(types.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Graph g;
    g.id = "g" + std::to_string(index);
    g.num_nodes = static_cast<int>(types.size());
    g.node_types.resize(types.size());
    for (std::size_t v = 0; v < types.size(); ++v) {
      g.node_types[static_cast<std::size_t>(perm[v])] = types[v];
    }
    for (const auto& e : edges) {
      int u = perm[static_cast<std::size_t>(e[0])];
      int w = perm[static_cast<std::size_t>(e[1])];
      if (u > w) std::swap(u, w);
      g.edges.push_back({u, w});
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.label = {static_cast<double>(draw.label)};
    g.env = draw.env->name;
    g.split = split;

    if (contains_motif(g, invariant) && !contains_motif(g, other)) return g;
  }
  throw SpecError("could not plant an unambiguous invariant motif; check the motif set");
}

}  // namespace

Motif builtin_motif(const std::string& name) {
  const auto& reg = registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw SpecError("unknown motif '" + name + "'");
  return it->second();
}

std::vector<std::string> builtin_motif_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

void validate_spec(const SynthSpec& spec) {
  if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0) {
    throw SpecError("split sizes must be non-negative");
  }
  if (spec.train_correlation < 0.0 || spec.train_correlation > 1.0) {
    throw SpecError("train_correlation must lie in [0, 1]");
  }
  if (spec.base_min < 1 || spec.base_min > spec.base_max) {
    throw SpecError("base size range must satisfy 1 <= base_min <= base_max");
  }
  if (spec.node_type_count < 1) throw SpecError("node_type_count must be positive");
  if (spec.base_types.empty()) throw SpecError("base_types is empty");
  for (int t : spec.base_types) {
    if (t < 0 || t >= spec.node_type_count) throw SpecError("base type outside alphabet");
  }
  if (spec.train_envs.size() < 2) {
    throw SpecError("need at least two training environments (one per label)");
  }
  for (const Motif& m : spec.invariant_motifs) validate_motif(m, spec);
  for (const Motif& m : spec.train_envs) validate_motif(m, spec);
  for (const Motif& m : spec.val_envs) validate_motif(m, spec);
  for (const Motif& m : spec.test_envs) validate_motif(m, spec);
  if (spec.shift_kind == ShiftKind::covariate) {
    if (spec.test_envs.empty()) throw SpecError("covariate shift needs test environments");
    std::set<std::string> train_names;
    for (const Motif& m : spec.train_envs) train_names.insert(m.name);
    for (const Motif& m : spec.test_envs) {
      if (train_names.contains(m.name)) {
        throw SpecError("test environment '" + m.name + "' also appears in training");
      }
    }
    for (const Motif& m : spec.val_envs) {
      if (train_names.contains(m.name)) {
        throw SpecError("val environment '" + m.name + "' also appears in training");
      }
    }
  }
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  if (!j.is_object()) throw SpecError("synth spec must be a JSON object");
  static const std::set<std::string> known{
      "n_train",   "n_val",    "n_test",          "invariant_motifs",  "train_envs",
      "val_envs",  "test_envs", "base_min",       "base_max",          "base_types",
      "node_type_count", "train_correlation", "shift_kind", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw SpecError("synth spec: unknown key '" + key + "'");
  }
  try {
    s.n_train = j.value("n_train", s.n_train);
    s.n_val = j.value("n_val", s.n_val);
    s.n_test = j.value("n_test", s.n_test);
    if (j.contains("invariant_motifs")) {
      auto inv = motifs_from_json(j.at("invariant_motifs"));
      if (inv.size() != 2) throw SpecError("invariant_motifs needs exactly two templates");
      s.invariant_motifs = {inv[0], inv[1]};
    }
    if (j.contains("train_envs")) s.train_envs = motifs_from_json(j.at("train_envs"));
    if (j.contains("val_envs")) s.val_envs = motifs_from_json(j.at("val_envs"));
    if (j.contains("test_envs")) s.test_envs = motifs_from_json(j.at("test_envs"));
    s.base_min = j.value("base_min", s.base_min);
    s.base_max = j.value("base_max", s.base_max);
    if (j.contains("base_types")) s.base_types = j.at("base_types").get<std::vector<int>>();
    s.node_type_count = j.value("node_type_count", s.node_type_count);
    s.train_correlation = j.value("train_correlation", s.train_correlation);
    if (j.contains("shift_kind")) {
      s.shift_kind = parse_shift_kind(j.at("shift_kind").get<std::string>());
    }
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw SpecError(std::string("synth spec: ") + e.what());
  } catch (const ValidationError& e) {
    throw SpecError(std::string("synth spec: ") + e.what());
  }
  validate_spec(s);
  return s;
}

json synth_spec_to_json(const SynthSpec& s) {
  auto list = [](const std::vector<Motif>& ms) {
    json a = json::array();
    for (const Motif& m : ms) a.push_back(motif_to_json(m));
    return a;
  };
  return {{"n_train", s.n_train},
          {"n_val", s.n_val},
          {"n_test", s.n_test},
          {"invariant_motifs",
           {motif_to_json(s.invariant_motifs[0]), motif_to_json(s.invariant_motifs[1])}},
          {"train_envs", list(s.train_envs)},
          {"val_envs", list(s.val_envs)},
          {"test_envs", list(s.test_envs)},
          {"base_min", s.base_min},
          {"base_max", s.base_max},
          {"base_types", s.base_types},
          {"node_type_count", s.node_type_count},
          {"train_correlation", s.train_correlation},
          {"shift_kind", to_string(s.shift_kind)},
          {"seed", s.seed}};
}

Dataset generate(const SynthSpec& spec) {
  validate_spec(spec);
  Dataset ds;
  int index = 0;
  auto emit = [&](Split split, int count) {
    for (int i = 0; i < count; ++i, ++index) {
      std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(index))));
      Graph g = make_graph(spec, split, index, rng);
      switch (split) {
        case Split::train: ds.split.train.push_back(g.id); break;
        case Split::val: ds.split.val.push_back(g.id); break;
        case Split::test: ds.split.test.push_back(g.id); break;
      }
      ds.graphs.push_back(std::move(g));
    }
  };
  emit(Split::train, spec.n_train);
  emit(Split::val, spec.n_val);
  emit(Split::test, spec.n_test);
  ds.split.shift_kind = spec.shift_kind;
  ds.task = {TaskKind::binary, 1};
  return ds;
}

bool contains_motif(const Graph& g, const Motif& motif) {
  const int n = g.num_nodes;
  const int k = motif.size();
  if (k == 0) return true;
  if (k > n) return false;
  std::vector<std::vector<char>> adj(static_cast<std::size_t>(n),
                                     std::vector<char>(static_cast<std::size_t>(n), 0));
  for (const auto& e : g.edges) {
    adj[static_cast<std::size_t>(e[0])][static_cast<std::size_t>(e[1])] = 1;
    adj[static_cast<std::size_t>(e[1])][static_cast<std::size_t>(e[0])] = 1;
  }
  std::vector<std::vector<int>> motif_adj(static_cast<std::size_t>(k));
  for (const auto& e : motif.edges) {
    motif_adj[static_cast<std::size_t>(e[0])].push_back(e[1]);
    motif_adj[static_cast<std::size_t>(e[1])].push_back(e[0]);
  }
  std::vector<int> image(static_cast<std::size_t>(k), -1);
  std::vector<char> used(static_cast<std::size_t>(n), 0);

  std::function<bool(int)> extend = [&](int m) -> bool {
    if (m == k) return true;
    const auto mi = static_cast<std::size_t>(m);
    for (int v = 0; v < n; ++v) {
      const auto vi = static_cast<std::size_t>(v);
      if (used[vi] || g.node_types[vi] != motif.node_types[mi]) continue;
      bool ok = true;
      for (int w : motif_adj[mi]) {
        const int img = image[static_cast<std::size_t>(w)];
        if (img >= 0 && !adj[vi][static_cast<std::size_t>(img)]) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      image[mi] = v;
      used[vi] = 1;
      if (extend(m + 1)) return true;
      image[mi] = -1;
      used[vi] = 0;
    }
    return false;
  };
  return extend(0);
}

}  // namespace imold
