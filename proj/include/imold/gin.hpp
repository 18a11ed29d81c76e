#pragma once

// GIN message passing with a fixed epsilon of 0:
//   h_v <- MLP(h_v + sum_{u in N(v)} h_u),  MLP(x) = relu(x W1 + b1) W2 + b2
// with a ReLU between layers and none after the last one.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "imold/autodiff.hpp"
#include "imold/graph.hpp"

namespace imold {

struct GinConfig {
  int num_layers = 3;
  int hidden_dim = 64;
  int node_type_count = 8;
  int mlp_hidden = 0;  // 0 means hidden_dim

  int mlp_width() const { return mlp_hidden > 0 ? mlp_hidden : hidden_dim; }
  void validate() const;
};

struct GinLayer {
  Matrix w1, b1, w2, b2;
};

struct GinParams {
  Matrix embedding;  // node_type_count x d
  std::vector<GinLayer> layers;

  static GinParams init(const GinConfig& config, std::mt19937_64& rng);
  // Visits every parameter with a stable dotted name.
  void for_each(const std::string& prefix,
                const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::string& prefix,
                const std::function<void(const std::string&, const Matrix&)>& fn) const;
};

Matrix glorot_uniform(Index rows, Index cols, std::mt19937_64& rng);

// h + A h, the pre-MLP message of every node.
ad::Tensor gin_aggregate(const ad::Tensor& h, const GraphBatch& batch);

// Node matrix H, total_nodes x d.
ad::Tensor encode(const GinParams& params, const GraphBatch& batch, ad::ParamBinder& bind);

// Per-graph mean of node rows, B x d.
ad::Tensor readout(const ad::Tensor& nodes, std::span<const Index> offsets);

// Separating scores sigmoid(GNN(G)), total_nodes x d, entries in (0, 1).
ad::Tensor score(const GinParams& params, const GraphBatch& batch, ad::ParamBinder& bind);

}  // namespace imold
