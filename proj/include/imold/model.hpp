#pragma once

// Encoder + residual VQ + scoring GNN, the separation into invariant and
// spurious parts, the four training objectives, and the ERM / ablation
// variants built from the same pieces.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "imold/autodiff.hpp"
#include "imold/gin.hpp"
#include "imold/graph.hpp"
#include "imold/rvq.hpp"

namespace imold {

enum class Mode { imold, erm, erm_rvq };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct Ablation {
  bool no_vq = false;   // separate H instead of H'
  bool no_r = false;    // separate Q(H) without the residual
  bool no_inv = false;
  bool no_reg = false;
  bool no_cmt = false;

  bool operator==(const Ablation&) const = default;
};

struct ModelConfig {
  GinConfig gin;
  int codebook_size = 100;
  double eta = 0.99;
  double lambda_inv = 0.01;
  double lambda_reg = 0.5;
  double lambda_cmt = 0.1;
  double gamma = 0.7;
  Mode mode = Mode::imold;
  Ablation ablation;
  TaskDescriptor task;

  VqMode vq_mode() const;
  bool uses_scorer() const { return mode == Mode::imold; }
  bool uses_inv() const { return uses_scorer() && !ablation.no_inv; }
  bool uses_reg() const { return uses_scorer() && !ablation.no_reg; }
  bool uses_cmt() const { return vq_mode() != VqMode::no_vq && !ablation.no_cmt; }
  void validate() const;
};

// 2-layer MLP with ReLU in between.
struct Mlp {
  Matrix w1, b1, w2, b2;
};

struct Linear {
  Matrix w, b;
};

struct ModelState {
  GinParams encoder;
  GinParams scorer;
  Mlp predictor;      // omega: 2d -> d -> d
  Linear classifier;  // rho: d -> K
  Codebook codebook;

  static ModelState init(const ModelConfig& config, std::uint64_t seed);

  // Gradient-trained parameters only; the codebook is EMA state.
  void for_each_param(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Matrix&)>& fn) const;
};

struct LossBreakdown {
  double pred = 0.0;
  double inv = 0.0;
  double reg = 0.0;
  double cmt = 0.0;
  double total = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

struct Separation {
  ad::Tensor invariant;  // H' * S, up to rounding
  ad::Tensor spurious;   // H' * (1 - S); invariant + spurious == H' exactly
};

Separation separate(const ad::Tensor& nodes, const ad::Tensor& scores);

struct GraphReps {
  ad::Tensor z_inv;  // B x d
  ad::Tensor z_spu;  // B x d
};

GraphReps graph_reps(const Separation& parts, std::span<const Index> offsets);

ad::Tensor mlp_forward(const Mlp& mlp, const ad::Tensor& x, ad::ParamBinder& bind);
ad::Tensor linear_forward(const Linear& lin, const ad::Tensor& x, ad::ParamBinder& bind);

// Uniform permutation of [0, n); fixed points allowed.
std::vector<Index> shuffle_permutation(Index n, std::uint64_t seed);

// -sum_i cos(sg[z_inv_i], omega(z_inv_i ++ z_spu_perm(i))). Throws
// ContractError for fewer than two graphs.
ad::Tensor invariant_loss(const ad::Tensor& z_inv, const ad::Tensor& z_spu, const Mlp& predictor,
                          ad::ParamBinder& bind, std::span<const Index> perm);
ad::Tensor invariant_loss(const ad::Tensor& z_inv, const ad::Tensor& z_spu, const Mlp& predictor,
                          ad::ParamBinder& bind, std::uint64_t perm_seed);

// Mean logit-BCE (binary, multilabel over observed entries) or mean squared
// error (regression) of logits against labels.
ad::Tensor prediction_loss(const ad::Tensor& logits, const Matrix& labels, const Matrix& mask,
                           TaskKind task);

// | sum(S) / (rows * cols) - gamma |
ad::Tensor scorer_regularizer(const ad::Tensor& scores, double gamma);

struct ForwardPass {
  ad::Tensor nodes;      // H
  ad::Tensor quantized;  // H' (== H without VQ)
  ad::Tensor scores;     // S; unset outside imold mode
  ad::Tensor z_inv;
  ad::Tensor z_spu;      // zeros outside imold mode
  ad::Tensor z;          // readout(H')
  ad::Tensor logits;     // rho(z_inv), B x K
  std::vector<Index> assignments;

  // Set only when losses were requested.
  ad::Tensor pred, inv, reg, cmt, total;
  LossBreakdown breakdown() const;
};

// Runs the full pipeline. Requires an initialized codebook whenever the
// configuration quantizes.
ForwardPass forward(const ModelState& state, const ModelConfig& config, const GraphBatch& batch,
                    ad::ParamBinder& bind, std::uint64_t perm_seed, bool with_losses = true);

LossBreakdown total_loss(const ModelState& state, const ModelConfig& config,
                         const GraphBatch& batch, std::uint64_t perm_seed);

// Seeds the codebook from the encoder output on `batch`.
void initialize_codebook(ModelState& state, const GraphBatch& batch);

}  // namespace imold
