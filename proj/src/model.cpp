#include "imold/model.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace imold {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::imold: return "imold";
    case Mode::erm: return "erm";
    case Mode::erm_rvq: return "erm_rvq";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "imold") return Mode::imold;
  if (s == "erm") return Mode::erm;
  if (s == "erm_rvq") return Mode::erm_rvq;
  throw ValidationError("unknown mode '" + s + "'");
}

VqMode ModelConfig::vq_mode() const {
  switch (mode) {
    case Mode::erm: return VqMode::no_vq;
    case Mode::erm_rvq: return VqMode::full;
    case Mode::imold: break;
  }
  if (ablation.no_vq) return VqMode::no_vq;
  if (ablation.no_r) return VqMode::no_residual;
  return VqMode::full;
}

void ModelConfig::validate() const {
  gin.validate();
  if (codebook_size < 1) throw ValidationError("codebook_size must be >= 1");
  if (!(eta > 0.0 && eta < 1.0)) throw ValidationError("eta must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  if (lambda_inv < 0 || lambda_reg < 0 || lambda_cmt < 0) {
    throw ValidationError("loss weights must be non-negative");
  }
  if (ablation.no_vq && ablation.no_r) throw ValidationError("no_vq and no_r are exclusive");
  if (task.num_tasks < 1) throw ValidationError("task arity must be >= 1");
}

ModelState ModelState::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const Index d = config.gin.hidden_dim;
  ModelState s;
  s.encoder = GinParams::init(config.gin, rng);
  s.scorer = GinParams::init(config.gin, rng);
  s.predictor.w1 = glorot_uniform(2 * d, d, rng);
  s.predictor.b1 = Matrix::Zero(1, d);
  s.predictor.w2 = glorot_uniform(d, d, rng);
  s.predictor.b2 = Matrix::Zero(1, d);
  s.classifier.w = glorot_uniform(d, config.task.num_tasks, rng);
  s.classifier.b = Matrix::Zero(1, config.task.num_tasks);
  s.codebook = Codebook::create(config.codebook_size, d, config.eta);
  return s;
}

void ModelState::for_each_param(const std::function<void(const std::string&, Matrix&)>& fn) {
  encoder.for_each("encoder", fn);
  scorer.for_each("scorer", fn);
  fn("predictor.w1", predictor.w1);
  fn("predictor.b1", predictor.b1);
  fn("predictor.w2", predictor.w2);
  fn("predictor.b2", predictor.b2);
  fn("classifier.w", classifier.w);
  fn("classifier.b", classifier.b);
}

void ModelState::for_each_param(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<ModelState*>(this)->for_each_param(
      std::function<void(const std::string&, Matrix&)>(
          [&fn](const std::string& name, Matrix& m) { fn(name, m); }));
}

Separation separate(const ad::Tensor& nodes, const ad::Tensor& scores) {
  if (nodes.shape() != scores.shape()) {
    throw DimensionError("separate: shape mismatch [" + std::to_string(nodes.rows()) + "x" +
                         std::to_string(nodes.cols()) + "] vs [" + std::to_string(scores.rows()) +
                         "x" + std::to_string(scores.cols()) + "]");
  }
  // spu = H' - H'S, then inv = H' - spu. Since |H'S| <= |H'|, the second
  // subtraction is exact, so inv + spu reproduces H' bit for bit.
  ad::Tensor spurious = ad::sub(nodes, ad::mul(nodes, scores));
  return {ad::sub(nodes, spurious), spurious};
}

GraphReps graph_reps(const Separation& parts, std::span<const Index> offsets) {
  return {readout(parts.invariant, offsets), readout(parts.spurious, offsets)};
}

ad::Tensor mlp_forward(const Mlp& mlp, const ad::Tensor& x, ad::ParamBinder& bind) {
  ad::Tensor h = ad::relu(ad::add_row(ad::matmul(x, bind(mlp.w1)), bind(mlp.b1)));
  return ad::add_row(ad::matmul(h, bind(mlp.w2)), bind(mlp.b2));
}

ad::Tensor linear_forward(const Linear& lin, const ad::Tensor& x, ad::ParamBinder& bind) {
  return ad::add_row(ad::matmul(x, bind(lin.w)), bind(lin.b));
}

std::vector<Index> shuffle_permutation(Index n, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

ad::Tensor invariant_loss(const ad::Tensor& z_inv, const ad::Tensor& z_spu, const Mlp& predictor,
                          ad::ParamBinder& bind, std::span<const Index> perm) {
  if (z_inv.rows() < 2) throw ContractError("invariant_loss: batch size must be >= 2");
  if (z_inv.shape() != z_spu.shape()) {
    throw DimensionError("invariant_loss: z_inv and z_spu shapes differ");
  }
  if (static_cast<Index>(perm.size()) != z_inv.rows()) {
    throw ContractError("invariant_loss: permutation length != batch size");
  }
  ad::Tensor augmented = ad::concat_cols(z_inv, ad::gather_rows(z_spu, perm));
  ad::Tensor predicted = mlp_forward(predictor, augmented, bind);
  return ad::neg(ad::sum(ad::cosine_similarity(ad::stop_gradient(z_inv), predicted)));
}

ad::Tensor invariant_loss(const ad::Tensor& z_inv, const ad::Tensor& z_spu, const Mlp& predictor,
                          ad::ParamBinder& bind, std::uint64_t perm_seed) {
  const auto perm = shuffle_permutation(z_inv.rows(), perm_seed);
  return invariant_loss(z_inv, z_spu, predictor, bind, perm);
}

ad::Tensor prediction_loss(const ad::Tensor& logits, const Matrix& labels, const Matrix& mask,
                           TaskKind task) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
    throw DimensionError("prediction_loss: logits and labels differ in shape");
  }
  switch (task) {
    case TaskKind::binary:
    case TaskKind::multilabel: return ad::bce_with_logits(logits, labels, mask);
    case TaskKind::regression: {
      ad::Tape& tape = *logits.tape();
      return ad::mse(logits, tape.constant(labels));
    }
  }
  throw ContractError("prediction_loss: unknown task");
}

ad::Tensor scorer_regularizer(const ad::Tensor& scores, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw ContractError("scorer_regularizer: gamma outside [0,1]");
  return ad::abs(ad::add_scalar(ad::mean(scores), -gamma));
}

LossBreakdown ForwardPass::breakdown() const {
  LossBreakdown b;
  b.pred = pred.item();
  b.inv = inv.item();
  b.reg = reg.item();
  b.cmt = cmt.item();
  b.total = total.item();
  return b;
}

ForwardPass forward(const ModelState& state, const ModelConfig& config, const GraphBatch& batch,
                    ad::ParamBinder& bind, std::uint64_t perm_seed, bool with_losses) {
  ad::Tape& tape = bind.tape();
  const VqMode vq = config.vq_mode();
  if (vq != VqMode::no_vq && !state.codebook.initialized) {
    throw ContractError("forward: codebook not initialized");
  }
  ForwardPass f;
  f.nodes = encode(state.encoder, batch, bind);
  QuantizeResult q = quantize(state.codebook, f.nodes, vq);
  f.quantized = q.output;
  f.assignments = std::move(q.assignments);
  f.z = readout(f.quantized, batch.offsets);

  if (config.uses_scorer()) {
    f.scores = score(state.scorer, batch, bind);
    GraphReps reps = graph_reps(separate(f.quantized, f.scores), batch.offsets);
    f.z_inv = reps.z_inv;
    f.z_spu = reps.z_spu;
  } else {
    f.z_inv = f.z;
    f.z_spu = tape.constant(Matrix::Zero(f.z.rows(), f.z.cols()));
  }
  f.logits = linear_forward(state.classifier, f.z_inv, bind);
  if (!with_losses) return f;

  const Matrix zero = Matrix::Zero(1, 1);
  f.pred = prediction_loss(f.logits, batch.labels, batch.mask, config.task.kind);
  f.inv = config.uses_inv()
              ? invariant_loss(f.z_inv, f.z_spu, state.predictor, bind, perm_seed)
              : tape.constant(zero);
  f.reg = config.uses_reg() ? scorer_regularizer(f.scores, config.gamma) : tape.constant(zero);
  f.cmt = config.uses_cmt() ? q.commitment : tape.constant(zero);

  f.total = f.pred;
  if (config.uses_inv()) f.total = ad::add(f.total, ad::scale(f.inv, config.lambda_inv));
  if (config.uses_reg()) f.total = ad::add(f.total, ad::scale(f.reg, config.lambda_reg));
  if (config.uses_cmt()) f.total = ad::add(f.total, ad::scale(f.cmt, config.lambda_cmt));
  return f;
}

LossBreakdown total_loss(const ModelState& state, const ModelConfig& config,
                         const GraphBatch& batch, std::uint64_t perm_seed) {
  ad::Tape tape;
  ad::ParamBinder bind(tape, false);
  return forward(state, config, batch, bind, perm_seed).breakdown();
}

void initialize_codebook(ModelState& state, const GraphBatch& batch) {
  ad::Tape tape;
  ad::ParamBinder bind(tape, false);
  state.codebook.init_from(encode(state.encoder, batch, bind).value());
}

}  // namespace imold
