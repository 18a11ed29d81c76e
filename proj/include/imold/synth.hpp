#pragma once

// Synthetic motif-based OOD graph classification data.
//
// Each graph is a random tree with two motifs hung off it: an invariant motif
// that fixes the label (motif 0 -> label 0, motif 1 -> label 1) and a spurious
// motif naming the graph's environment. In training, environment k is aligned
// with label k % 2 and the spurious motif agrees with the label with
// probability train_correlation. Covariate shift draws val/test environments
// from motif sets unseen in training, independent of the label; concept shift
// keeps the training environments but flips the correlation in test.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "imold/graph.hpp"

namespace imold {

struct Motif {
  std::string name;
  std::vector<int> node_types;
  std::vector<std::array<int, 2>> edges;

  int size() const { return static_cast<int>(node_types.size()); }
};

// Built-in templates; throws SpecError for unknown names.
Motif builtin_motif(const std::string& name);
std::vector<std::string> builtin_motif_names();

struct SynthSpec {
  int n_train = 1000;
  int n_val = 200;
  int n_test = 200;
  std::array<Motif, 2> invariant_motifs{builtin_motif("cycle5"), builtin_motif("house")};
  std::vector<Motif> train_envs{builtin_motif("star_a"), builtin_motif("star_b"),
                                builtin_motif("path_a"), builtin_motif("path_b")};
  // Covariate shift only; empty val_envs means val follows the training law.
  std::vector<Motif> val_envs{builtin_motif("triangle_a"), builtin_motif("triangle_b")};
  std::vector<Motif> test_envs{builtin_motif("ladder_a"), builtin_motif("ladder_b")};
  int base_min = 10;
  int base_max = 20;
  // Base nodes share the invariant motifs' types (0, 1), so the label is only
  // readable from structure, while the spurious motifs' types (2, 3) stay
  // exclusive to the environments.
  std::vector<int> base_types{0, 1, 4, 5, 6, 7};
  int node_type_count = 8;
  double train_correlation = 0.9;
  ShiftKind shift_kind = ShiftKind::covariate;
  std::uint64_t seed = 0;
};

// Throws SpecError on invalid specs.
void validate_spec(const SynthSpec& spec);

// Reads a JSON config; motifs may be built-in names or
// {"name", "node_types", "edges"} objects. Missing keys keep defaults.
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json synth_spec_to_json(const SynthSpec& spec);

// Graphs are emitted train, then val, then test; ids are "g<index>".
Dataset generate(const SynthSpec& spec);

// True when `motif` embeds into `g` as a (not necessarily induced) subgraph
// with matching node types. Exhaustive backtracking; intended for small graphs.
bool contains_motif(const Graph& g, const Motif& motif);

}  // namespace imold
