#pragma once

// Define-by-run reverse-mode differentiation over dense float64 matrices.
//
// Every value is a 2-D Eigen matrix; scalars are 1x1 and vectors are single
// rows or columns. A Tape owns all values produced during one forward pass;
// a Tensor is a lightweight handle (tape pointer + node index) into it.
// Operations record a backward rule only when at least one input requires a
// gradient, so inference passes carry no closures.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "imold/errors.hpp"

namespace imold {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace ad {

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  // Zero-sized until Tape::backward has run.
  const Matrix& grad() const;
  bool requires_grad() const;

  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Index size() const { return value().size(); }
  // Value of a 1x1 tensor.
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// `out` is the node's own forward value; grads[i] is null when input i does
// not require a gradient.
using BackwardFn = std::function<void(const Matrix& out, const Matrix& grad_out,
                                      std::span<Matrix* const> grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Matrix value, bool requires_grad = true);
  Tensor constant(Matrix value) { return leaf(std::move(value), false); }

  // Appends an operation output. The backward rule is dropped when no input
  // requires a gradient.
  Tensor record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  // Accumulates d(loss)/d(node) into every node that requires a gradient.
  // Throws ContractError unless loss is a 1x1 tensor on this tape.
  void backward(const Tensor& loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient-detached constants (stop_gradient values, straight-through
  // offsets) in creation order. Replaying a log from an earlier pass holds
  // them fixed, so finite differences see the same surrogate objective the
  // analytic gradient differentiates.
  Matrix detach(const Matrix& value);
  const std::vector<Matrix>& detached() const { return detached_; }
  void replay_detached(std::vector<Matrix> log);
  bool replaying() const { return replay_.has_value(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  // deque keeps references to earlier values stable while the tape grows.
  std::deque<Node> nodes_;
  std::vector<Matrix> detached_;
  std::optional<std::vector<Matrix>> replay_;
};

// Binds persistent parameter matrices to tape leaves, once per forward pass.
// Lookup is by address, so the parameter objects must outlive the binder.
class ParamBinder {
 public:
  explicit ParamBinder(Tape& tape, bool requires_grad = true)
      : tape_(&tape), requires_grad_(requires_grad) {}

  Tensor operator()(const Matrix& param);
  // Routes later lookups of `param` to an existing tensor.
  void bind_to(const Matrix& param, const Tensor& t) { bound_[&param] = t; }
  // Gradient of a bound parameter after backward; null when never bound.
  const Matrix* grad(const Matrix& param) const;

  Tape& tape() const { return *tape_; }
  bool requires_grad() const { return requires_grad_; }

 private:
  Tape* tape_;
  bool requires_grad_;
  std::unordered_map<const Matrix*, Tensor> bound_;
};

// ---- primitive operations -------------------------------------------------
// All binary operations require both operands on the same tape and throw
// DimensionError naming the op and both shapes on mismatch.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor neg(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
// a (n x c) + row (1 x c) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sum(const Tensor& a);   // 1x1
Tensor mean(const Tensor& a);  // 1x1

// offsets holds B+1 strictly increasing row boundaries, offsets[0] == 0 and
// offsets[B] == a.rows(). Output is B x cols.
Tensor segment_sum(const Tensor& a, std::span<const Index> offsets);
Tensor segment_mean(const Tensor& a, std::span<const Index> offsets);

Tensor row_norm(const Tensor& a);  // n x 1 Euclidean norms
// Row-wise cosine similarity, n x 1: <a,b> / (max(|a|,eps) * max(|b|,eps)).
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-8);
// Sum of squared differences, 1x1.
Tensor squared_error(const Tensor& a, const Tensor& b);
// Mean squared difference, 1x1.
Tensor mse(const Tensor& a, const Tensor& b);
// Mean binary cross-entropy on logits over entries where mask != 0, using the
// stable form max(x,0) - x*y + log(1 + exp(-|x|)). Throws ContractError when
// the mask selects nothing.
Tensor bce_with_logits(const Tensor& logits, const Matrix& targets, const Matrix& mask);
// Same as above with every entry observed.
Tensor bce_with_logits(const Tensor& logits, const Matrix& targets);

// Identity forward (bitwise), zero gradient upstream.
Tensor stop_gradient(const Tensor& a);
// Forward value is `forward_value`; the gradient passes to `a` unchanged.
Tensor straight_through(const Tensor& a, const Matrix& forward_value);

// out.row(i) = a.row(indices[i]); backward scatters and adds.
Tensor gather_rows(const Tensor& a, std::span<const Index> indices);
// Constant sparse left-multiplication: out = m * a.
Tensor spmm(const SparseMatrix& m, const Tensor& a);

// ---- verification harness ---------------------------------------------------

using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

// Max over coordinates of |analytic - central| / max(1, |central|).
// Throws NumericError on non-finite function values or gradients.
double grad_check(const ScalarFn& f, const Matrix& x, double step = 1e-5);

}  // namespace ad
}  // namespace imold
