#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "imold/synth.hpp"

using namespace imold;

namespace {

// Index of the training environment a graph carries; environment k is
// aligned with label k % 2.
bool aligned(const SynthSpec& spec, const Graph& g) {
  for (std::size_t k = 0; k < spec.train_envs.size(); ++k) {
    if (spec.train_envs[k].name == *g.env) return static_cast<double>(k % 2) == *g.label[0];
  }
  FAIL("graph env is not a training environment");
  return false;
}

std::string serialize(const Dataset& d) {
  std::ostringstream os;
  write_dataset(os, d.graphs);
  return os.str();
}

}  // namespace

TEST_CASE("rho = 1: the spurious environment predicts the training label perfectly") {
  SynthSpec spec;
  spec.n_train = 300;
  spec.n_val = 10;
  spec.n_test = 10;
  spec.train_correlation = 1.0;
  Dataset d = generate(spec);
  for (const Graph& g : d.subset(Split::train)) CHECK(aligned(spec, g));
}

TEST_CASE("rho = 0.9, 1000 training graphs: aligned fraction inside the binomial interval") {
  SynthSpec spec;
  Dataset d = generate(spec);
  const auto train = d.subset(Split::train);
  REQUIRE(train.size() == 1000);
  int hits = 0;
  for (const Graph& g : train) hits += aligned(spec, g) ? 1 : 0;
  // 0.9 +- 1.96 * sqrt(0.9 * 0.1 / 1000) = [0.881, 0.919], inside [0.87, 0.93].
  const double frac = hits / 1000.0;
  CHECK(frac >= 0.87);
  CHECK(frac <= 0.93);
}

TEST_CASE("same seed gives a byte-identical dataset; another seed does not") {
  SynthSpec spec;
  spec.n_train = 100;
  spec.n_val = 20;
  spec.n_test = 20;
  const std::string a = serialize(generate(spec));
  CHECK(a == serialize(generate(spec)));
  spec.seed = 1;
  CHECK(a != serialize(generate(spec)));
}

TEST_CASE("covariate shift: test environments never appear in training") {
  SynthSpec spec;
  spec.n_train = 200;
  Dataset d = generate(spec);
  std::set<std::string> train_envs, test_envs;
  for (const Graph& g : d.subset(Split::train)) train_envs.insert(*g.env);
  for (const Graph& g : d.subset(Split::test)) test_envs.insert(*g.env);
  CHECK(!test_envs.empty());
  for (const auto& e : test_envs) CHECK(train_envs.count(e) == 0);
  REQUIRE(d.split.shift_kind);
  CHECK(*d.split.shift_kind == ShiftKind::covariate);
}

TEST_CASE("label is the planted invariant motif, never both") {
  SynthSpec spec;
  spec.n_train = 150;
  spec.n_val = 50;
  spec.n_test = 50;
  Dataset d = generate(spec);
  CHECK(d.graphs.size() == 250);
  for (const Graph& g : d.graphs) {
    const int label = static_cast<int>(*g.label[0]);
    CHECK(contains_motif(g, spec.invariant_motifs[static_cast<std::size_t>(label)]));
    CHECK(!contains_motif(g, spec.invariant_motifs[static_cast<std::size_t>(1 - label)]));
    CHECK_NOTHROW(validate_graph(g, d.task));
    CHECK(g.num_nodes >= spec.base_min);
  }
}

TEST_CASE("concept shift flips the correlation in test") {
  SynthSpec spec;
  spec.shift_kind = ShiftKind::concept_shift;
  spec.n_train = 400;
  spec.n_test = 400;
  Dataset d = generate(spec);
  int train_hits = 0, test_hits = 0;
  for (const Graph& g : d.subset(Split::train)) train_hits += aligned(spec, g) ? 1 : 0;
  for (const Graph& g : d.subset(Split::test)) test_hits += aligned(spec, g) ? 1 : 0;
  CHECK(train_hits / 400.0 > 0.8);
  CHECK(test_hits / 400.0 < 0.2);
}

TEST_CASE("spec validation") {
  SynthSpec spec;
  spec.train_correlation = 1.5;
  CHECK_THROWS_AS(validate_spec(spec), SpecError);

  spec = SynthSpec{};
  spec.base_max = 4;
  spec.base_min = 2;
  CHECK_THROWS_AS(validate_spec(spec), SpecError);  // motifs larger than the base range

  spec = SynthSpec{};
  spec.test_envs = {builtin_motif("star_a")};
  CHECK_THROWS_AS(validate_spec(spec), SpecError);  // test env seen in training

  spec = SynthSpec{};
  Motif broken{"broken", {2, 2, 2}, {{0, 1}}};
  spec.train_envs.push_back(broken);
  CHECK_THROWS_AS(validate_spec(spec), SpecError);  // disconnected template

  CHECK_THROWS_AS(builtin_motif("nope"), SpecError);
  CHECK_NOTHROW(validate_spec(SynthSpec{}));
}

TEST_CASE("spec json round trip") {
  SynthSpec spec;
  spec.n_train = 7;
  spec.train_correlation = 0.75;
  spec.shift_kind = ShiftKind::concept_shift;
  spec.seed = 99;
  const auto j = synth_spec_to_json(spec);
  const SynthSpec back = synth_spec_from_json(j);
  CHECK(synth_spec_to_json(back) == j);
  CHECK(back.n_train == 7);
  CHECK(back.seed == 99);
  CHECK_THROWS_AS(synth_spec_from_json(nlohmann::json{{"n_trian", 5}}), SpecError);
}

TEST_CASE("typed motif search") {
  Graph g;
  g.id = "c";
  g.num_nodes = 5;
  g.node_types = {0, 1, 0, 1, 1};
  g.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}};
  g.label = {0.0};
  CHECK(contains_motif(g, builtin_motif("cycle5")));
  CHECK(!contains_motif(g, builtin_motif("house")));
  g.node_types = {1, 1, 1, 1, 1};
  CHECK(!contains_motif(g, builtin_motif("cycle5")));
}
