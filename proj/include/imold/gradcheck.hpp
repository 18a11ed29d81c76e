#pragma once

// Finite-difference verification suites shared by the test binaries and the
// `gradcheck` CLI subcommand.

#include <cstdint>
#include <string>
#include <vector>

#include "imold/graph.hpp"
#include "imold/model.hpp"

namespace imold {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

// One entry per primitive op, random float64 inputs kept off ReLU/abs kinks.
std::vector<GradCheckEntry> primitive_gradchecks(std::uint64_t seed = 7);

// Small model with a frozen codebook and a fixed shuffle permutation.
struct ToyModel {
  ModelConfig config;
  ModelState state;
  GraphBatch batch;
  std::uint64_t perm_seed = 0;
};

// d = 4, two layers, |C| = 4, B = 3, every loss active unless the config
// says otherwise.
ToyModel make_toy_model(std::uint64_t seed, Mode mode = Mode::imold, Ablation ablation = {},
                        TaskDescriptor task = {});

// Central differences of the total loss against every parameter matrix the
// configuration touches. One entry per parameter matrix.
std::vector<GradCheckEntry> model_gradchecks(const ToyModel& toy, double step = 1e-5,
                                             double tolerance = 1e-4);

}  // namespace imold
