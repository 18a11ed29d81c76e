#include "imold/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace imold::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << '[' << m.rows() << 'x' << m.cols() << ']';
  return os.str();
}

[[noreturn]] void dimension_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                       shape_str(b));
}

Tape& same_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid()) throw ContractError(std::string(op) + ": unbound tensor");
  if (a.tape() != b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

Tape& tape_of(const char* op, const Tensor& a) {
  if (!a.valid()) throw ContractError(std::string(op) + ": unbound tensor");
  return *a.tape();
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) dimension_error(op, a, b);
}

void check_offsets(const char* op, std::span<const Index> offsets, Index rows) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw ContractError(std::string(op) + ": segment offsets must start at 0 and end at " +
                        std::to_string(rows));
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] <= offsets[i - 1]) {
      throw ContractError(std::string(op) + ": empty or decreasing segment at " +
                          std::to_string(i - 1));
    }
  }
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

// ---- Tensor -----------------------------------------------------------------

const Matrix& Tensor::value() const { return tape_->value(id_); }
const Matrix& Tensor::grad() const { return tape_->grad(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("item: tensor is " + shape_str(v) + ", not 1x1");
  return v(0, 0);
}

// ---- Tape -------------------------------------------------------------------

Tensor Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, {}, nullptr});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool any = false;
  for (std::size_t id : inputs) any = any || nodes_[id].requires_grad;
  if (!any) {
    backward = nullptr;
    inputs.clear();
  }
  nodes_.push_back(Node{std::move(value), Matrix(), any, std::move(inputs), std::move(backward)});
  return Tensor(this, nodes_.size() - 1);
}

Matrix Tape::detach(const Matrix& value) {
  if (!replay_) {
    detached_.push_back(value);
    return value;
  }
  const std::size_t i = detached_.size();
  if (i >= replay_->size()) throw ContractError("detach: replay log exhausted");
  const Matrix& v = (*replay_)[i];
  if (v.rows() != value.rows() || v.cols() != value.cols()) {
    throw DimensionError("detach: replayed " + shape_str(v) + " vs current " + shape_str(value));
  }
  detached_.push_back(v);
  return v;
}

void Tape::replay_detached(std::vector<Matrix> log) {
  if (!detached_.empty()) throw ContractError("replay_detached: detached values already recorded");
  replay_ = std::move(log);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw ContractError("backward: loss is not on this tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.value()));
  }
  const std::size_t last = loss.id();
  for (std::size_t i = 0; i <= last; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      n.grad.setZero(n.value.rows(), n.value.cols());
    } else {
      n.grad.resize(0, 0);
    }
  }
  if (!nodes_[last].requires_grad) return;
  nodes_[last].grad(0, 0) = 1.0;

  std::vector<Matrix*> grads;
  for (std::size_t i = last + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward) continue;
    grads.clear();
    for (std::size_t in : n.inputs) {
      Node& src = nodes_[in];
      grads.push_back(src.requires_grad ? &src.grad : nullptr);
    }
    n.backward(n.value, n.grad, grads);
  }
}

// ---- ParamBinder ------------------------------------------------------------

Tensor ParamBinder::operator()(const Matrix& param) {
  auto it = bound_.find(&param);
  if (it != bound_.end()) return it->second;
  Tensor t = tape_->leaf(param, requires_grad_);
  bound_.emplace(&param, t);
  return t;
}

const Matrix* ParamBinder::grad(const Matrix& param) const {
  auto it = bound_.find(&param);
  if (it == bound_.end() || !it->second.requires_grad()) return nullptr;
  const Matrix& g = it->second.grad();
  return g.size() == 0 ? nullptr : &g;
}

// ---- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape("add", a, b);
  require_same_shape("add", a.value(), b.value());
  return t.record(a.value() + b.value(), {a.id(), b.id()},
                  [](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g;
                    if (gs[1]) *gs[1] += g;
                  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  return t.record(a.value() - b.value(), {a.id(), b.id()},
                  [](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g;
                    if (gs[1]) *gs[1] -= g;
                  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape("mul", a, b);
  require_same_shape("mul", a.value(), b.value());
  const Matrix* av = &a.value();
  const Matrix* bv = &b.value();
  return t.record(av->cwiseProduct(*bv), {a.id(), b.id()},
                  [av, bv](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g.cwiseProduct(*bv);
                    if (gs[1]) *gs[1] += g.cwiseProduct(*av);
                  });
}

Tensor scale(const Tensor& a, double factor) {
  Tape& t = tape_of("scale", a);
  return t.record(a.value() * factor, {a.id()},
                  [factor](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g * factor;
                  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  Tape& t = tape_of("add_scalar", a);
  return t.record((a.value().array() + offset).matrix(), {a.id()},
                  [](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g;
                  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape("matmul", a, b);
  if (a.cols() != b.rows()) dimension_error("matmul", a.value(), b.value());
  const Matrix* av = &a.value();
  const Matrix* bv = &b.value();
  return t.record((*av) * (*bv), {a.id(), b.id()},
                  [av, bv](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) gs[0]->noalias() += g * bv->transpose();
                    if (gs[1]) gs[1]->noalias() += av->transpose() * g;
                  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  Tape& t = same_tape("add_row", a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    dimension_error("add_row", a.value(), row.value());
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), {a.id(), row.id()},
                  [](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g;
                    if (gs[1]) *gs[1] += g.colwise().sum();
                  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape("concat_cols", a, b);
  if (a.rows() != b.rows()) dimension_error("concat_cols", a.value(), b.value());
  const Index ca = a.cols();
  const Index cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  out << a.value(), b.value();
  return t.record(std::move(out), {a.id(), b.id()},
                  [ca, cb](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g.leftCols(ca);
                    if (gs[1]) *gs[1] += g.rightCols(cb);
                  });
}

Tensor sigmoid(const Tensor& a) {
  Tape& t = tape_of("sigmoid", a);
  Matrix out = a.value().unaryExpr([](double x) {
    // Split on sign so exp never overflows.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return t.record(std::move(out), {a.id()},
                  [](const Matrix& y, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) {
                      gs[0]->array() += g.array() * y.array() * (1.0 - y.array());
                    }
                  });
}

Tensor relu(const Tensor& a) {
  Tape& t = tape_of("relu", a);
  const Matrix* av = &a.value();
  return t.record(av->cwiseMax(0.0), {a.id()},
                  [av](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) {
                      gs[0]->array() += (av->array() > 0.0).select(g.array(), 0.0);
                    }
                  });
}

Tensor abs(const Tensor& a) {
  Tape& t = tape_of("abs", a);
  const Matrix* av = &a.value();
  return t.record(av->cwiseAbs(), {a.id()},
                  [av](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) gs[0]->array() += g.array() * av->array().sign();
                  });
}

Tensor sum(const Tensor& a) {
  Tape& t = tape_of("sum", a);
  return t.record(scalar(a.value().sum()), {a.id()},
                  [](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) gs[0]->array() += g(0, 0);
                  });
}

Tensor mean(const Tensor& a) {
  Tape& t = tape_of("mean", a);
  if (a.size() == 0) throw ContractError("mean: empty tensor");
  const double n = static_cast<double>(a.size());
  return t.record(scalar(a.value().sum() / n), {a.id()},
                  [n](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) gs[0]->array() += g(0, 0) / n;
                  });
}

// ---- segments -----------------------------------------------------------------

Tensor segment_sum(const Tensor& a, std::span<const Index> offsets) {
  Tape& t = tape_of("segment_sum", a);
  check_offsets("segment_sum", offsets, a.rows());
  std::vector<Index> off(offsets.begin(), offsets.end());
  const Index segments = static_cast<Index>(off.size()) - 1;
  Matrix out(segments, a.cols());
  for (Index s = 0; s < segments; ++s) {
    out.row(s) = a.value().middleRows(off[s], off[s + 1] - off[s]).colwise().sum();
  }
  return t.record(std::move(out), {a.id()},
                  [off = std::move(off)](const Matrix&, const Matrix& g,
                                         std::span<Matrix* const> gs) {
                    if (!gs[0]) return;
                    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
                      gs[0]->middleRows(off[s], off[s + 1] - off[s]).rowwise() +=
                          g.row(static_cast<Index>(s));
                    }
                  });
}

Tensor segment_mean(const Tensor& a, std::span<const Index> offsets) {
  Tape& t = tape_of("segment_mean", a);
  check_offsets("segment_mean", offsets, a.rows());
  std::vector<Index> off(offsets.begin(), offsets.end());
  const Index segments = static_cast<Index>(off.size()) - 1;
  Matrix out(segments, a.cols());
  for (Index s = 0; s < segments; ++s) {
    const Index n = off[s + 1] - off[s];
    out.row(s) = a.value().middleRows(off[s], n).colwise().sum() / static_cast<double>(n);
  }
  return t.record(std::move(out), {a.id()},
                  [off = std::move(off)](const Matrix&, const Matrix& g,
                                         std::span<Matrix* const> gs) {
                    if (!gs[0]) return;
                    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
                      const Index n = off[s + 1] - off[s];
                      gs[0]->middleRows(off[s], n).rowwise() +=
                          g.row(static_cast<Index>(s)) / static_cast<double>(n);
                    }
                  });
}

// ---- norms and losses -----------------------------------------------------------

Tensor row_norm(const Tensor& a) {
  Tape& t = tape_of("row_norm", a);
  const Matrix* av = &a.value();
  Matrix out = av->rowwise().norm();
  return t.record(std::move(out), {a.id()},
                  [av](const Matrix& n, const Matrix& g, std::span<Matrix* const> gs) {
                    if (!gs[0]) return;
                    for (Index i = 0; i < av->rows(); ++i) {
                      // Subgradient 0 at the origin.
                      if (n(i, 0) > 0.0) gs[0]->row(i) += g(i, 0) / n(i, 0) * av->row(i);
                    }
                  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  Tape& t = same_tape("cosine_similarity", a, b);
  require_same_shape("cosine_similarity", a.value(), b.value());
  const Matrix* av = &a.value();
  const Matrix* bv = &b.value();
  const Index n = av->rows();
  Vector na = av->rowwise().norm();
  Vector nb = bv->rowwise().norm();
  Vector dot = av->cwiseProduct(*bv).rowwise().sum();
  Matrix out(n, 1);
  for (Index i = 0; i < n; ++i) {
    out(i, 0) = dot(i) / (std::max(na(i), eps) * std::max(nb(i), eps));
  }
  return t.record(
      std::move(out), {a.id(), b.id()},
      [av, bv, na, nb, eps](const Matrix& c, const Matrix& g, std::span<Matrix* const> gs) {
        for (Index i = 0; i < av->rows(); ++i) {
          const double da = std::max(na(i), eps);
          const double db = std::max(nb(i), eps);
          const double gi = g(i, 0);
          // Below eps the norm is a constant, so only the dot term remains.
          if (gs[0]) {
            RowVector r = bv->row(i) / (da * db);
            if (na(i) > eps) r -= c(i, 0) * av->row(i) / (na(i) * na(i));
            gs[0]->row(i) += gi * r;
          }
          if (gs[1]) {
            RowVector r = av->row(i) / (da * db);
            if (nb(i) > eps) r -= c(i, 0) * bv->row(i) / (nb(i) * nb(i));
            gs[1]->row(i) += gi * r;
          }
        }
      });
}

Tensor squared_error(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape("squared_error", a, b);
  require_same_shape("squared_error", a.value(), b.value());
  Matrix diff = a.value() - b.value();
  const double v = diff.squaredNorm();
  return t.record(scalar(v), {a.id(), b.id()},
                  [diff = std::move(diff)](const Matrix&, const Matrix& g,
                                           std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += 2.0 * g(0, 0) * diff;
                    if (gs[1]) *gs[1] -= 2.0 * g(0, 0) * diff;
                  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.valid() && a.size() == 0) throw ContractError("mse: empty tensor");
  return scale(squared_error(a, b), 1.0 / static_cast<double>(a.size()));
}

Tensor bce_with_logits(const Tensor& logits, const Matrix& targets, const Matrix& mask) {
  Tape& t = tape_of("bce_with_logits", logits);
  const Matrix& x = logits.value();
  require_same_shape("bce_with_logits", x, targets);
  require_same_shape("bce_with_logits", x, mask);
  const double count = (mask.array() != 0.0).count();
  if (count == 0) throw ContractError("bce_with_logits: no observed entries");
  double total = 0.0;
  Matrix dlogit = Matrix::Zero(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      if (mask(i, j) == 0.0) continue;
      const double xi = x(i, j);
      const double y = targets(i, j);
      total += std::max(xi, 0.0) - xi * y + std::log1p(std::exp(-std::abs(xi)));
      const double p = xi >= 0 ? 1.0 / (1.0 + std::exp(-xi))
                                : std::exp(xi) / (1.0 + std::exp(xi));
      dlogit(i, j) = (p - y) / count;
    }
  }
  return t.record(scalar(total / count), {logits.id()},
                  [dlogit = std::move(dlogit)](const Matrix&, const Matrix& g,
                                               std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g(0, 0) * dlogit;
                  });
}

Tensor bce_with_logits(const Tensor& logits, const Matrix& targets) {
  return bce_with_logits(logits, targets,
                         Matrix::Ones(logits.value().rows(), logits.value().cols()));
}

// ---- gradient routing -------------------------------------------------------------

Tensor stop_gradient(const Tensor& a) {
  Tape& t = tape_of("stop_gradient", a);
  return t.constant(t.detach(a.value()));
}

Tensor straight_through(const Tensor& a, const Matrix& forward_value) {
  Tape& t = tape_of("straight_through", a);
  require_same_shape("straight_through", a.value(), forward_value);
  // forward = a + sg(forward - a); the direct value avoids rounding outside replay.
  const bool replay = t.replaying();
  Matrix offset = t.detach(forward_value - a.value());
  Matrix value = replay ? Matrix(a.value() + offset) : forward_value;
  return t.record(std::move(value), {a.id()},
                  [](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) *gs[0] += g;
                  });
}

Tensor gather_rows(const Tensor& a, std::span<const Index> indices) {
  Tape& t = tape_of("gather_rows", a);
  std::vector<Index> idx(indices.begin(), indices.end());
  Matrix out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) {
      throw ContractError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                          shape_str(a.value()));
    }
    out.row(static_cast<Index>(i)) = a.value().row(idx[i]);
  }
  return t.record(std::move(out), {a.id()},
                  [idx = std::move(idx)](const Matrix&, const Matrix& g,
                                         std::span<Matrix* const> gs) {
                    if (!gs[0]) return;
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                      gs[0]->row(idx[i]) += g.row(static_cast<Index>(i));
                    }
                  });
}

Tensor spmm(const SparseMatrix& m, const Tensor& a) {
  Tape& t = tape_of("spmm", a);
  if (m.cols() != a.rows()) {
    throw DimensionError("spmm: shape mismatch [" + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + "] vs " + shape_str(a.value()));
  }
  const SparseMatrix* mp = &m;
  Matrix out = m * a.value();
  return t.record(std::move(out), {a.id()},
                  [mp](const Matrix&, const Matrix& g, std::span<Matrix* const> gs) {
                    if (gs[0]) gs[0]->noalias() += mp->transpose() * g;
                  });
}

// ---- grad_check ---------------------------------------------------------------------

double grad_check(const ScalarFn& f, const Matrix& x, double step) {
  Matrix analytic;
  {
    Tape tape;
    Tensor xt = tape.leaf(x, true);
    Tensor y = f(tape, xt);
    if (!std::isfinite(y.item())) throw NumericError("grad_check: non-finite function value");
    tape.backward(y);
    analytic = xt.grad();
    if (analytic.size() == 0) analytic = Matrix::Zero(x.rows(), x.cols());
    if (!analytic.allFinite()) throw NumericError("grad_check: non-finite analytic gradient");
  }
  auto eval = [&f](const Matrix& at) {
    Tape tape;
    Tensor xt = tape.leaf(at, false);
    const double v = f(tape, xt).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };
  double worst = 0.0;
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double up = eval(probe);
    probe.data()[i] = orig - step;
    const double down = eval(probe);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic.data()[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace imold::ad
