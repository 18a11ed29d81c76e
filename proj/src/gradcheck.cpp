#include "imold/gradcheck.hpp"

#include <cmath>
#include <random>

namespace imold {

namespace {

using ad::Tape;
using ad::Tensor;

Matrix uniform(Index r, Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Magnitudes in [0.1, 1], random sign: keeps ReLU and |x| away from 0.
Matrix off_kink(Index r, Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return m;
}

// Reduces any output to a scalar with fixed random weights so every output
// coordinate contributes.
Tensor weighted_sum(const Tensor& out, const Matrix& w) {
  return ad::sum(ad::mul(out, out.tape()->constant(w)));
}

}  // namespace

std::vector<GradCheckEntry> primitive_gradchecks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckEntry> out;
  constexpr double kSmooth = 1e-6;

  auto run = [&](const std::string& name, const Matrix& x, Index out_rows, Index out_cols,
                 const std::function<Tensor(Tape&, const Tensor&)>& op) {
    const Matrix w = uniform(out_rows, out_cols, rng);
    const double err = ad::grad_check(
        [&](Tape& t, const Tensor& xt) { return weighted_sum(op(t, xt), w); }, x);
    out.push_back({name, err, kSmooth});
  };

  const Matrix a = uniform(4, 3, rng);
  const Matrix b = uniform(4, 3, rng);
  const Matrix sq = uniform(3, 5, rng);
  const Matrix row = uniform(1, 3, rng);

  run("add", a, 4, 3, [&](Tape& t, const Tensor& x) { return ad::add(x, t.constant(b)); });
  run("sub/lhs", a, 4, 3, [&](Tape& t, const Tensor& x) { return ad::sub(x, t.constant(b)); });
  run("sub/rhs", a, 4, 3, [&](Tape& t, const Tensor& x) { return ad::sub(t.constant(b), x); });
  run("mul", a, 4, 3, [&](Tape& t, const Tensor& x) { return ad::mul(x, t.constant(b)); });
  run("mul/self", a, 4, 3, [&](Tape&, const Tensor& x) { return ad::mul(x, x); });
  run("scale", a, 4, 3, [](Tape&, const Tensor& x) { return ad::scale(x, -2.5); });
  run("add_scalar", a, 4, 3, [](Tape&, const Tensor& x) { return ad::add_scalar(x, 0.3); });
  run("matmul/lhs", a, 4, 5, [&](Tape& t, const Tensor& x) { return ad::matmul(x, t.constant(sq)); });
  run("matmul/rhs", sq, 4, 5, [&](Tape& t, const Tensor& x) { return ad::matmul(t.constant(a), x); });
  run("add_row/matrix", a, 4, 3, [&](Tape& t, const Tensor& x) { return ad::add_row(x, t.constant(row)); });
  run("add_row/row", row, 4, 3, [&](Tape& t, const Tensor& x) { return ad::add_row(t.constant(a), x); });
  run("concat_cols/lhs", a, 4, 6, [&](Tape& t, const Tensor& x) { return ad::concat_cols(x, t.constant(b)); });
  run("concat_cols/rhs", b, 4, 6, [&](Tape& t, const Tensor& x) { return ad::concat_cols(t.constant(a), x); });
  run("sigmoid", uniform(4, 3, rng, -3, 3), 4, 3, [](Tape&, const Tensor& x) { return ad::sigmoid(x); });
  run("relu", off_kink(4, 3, rng), 4, 3, [](Tape&, const Tensor& x) { return ad::relu(x); });
  run("abs", off_kink(4, 3, rng), 4, 3, [](Tape&, const Tensor& x) { return ad::abs(x); });
  run("sum", a, 1, 1, [](Tape&, const Tensor& x) { return ad::sum(x); });
  run("mean", a, 1, 1, [](Tape&, const Tensor& x) { return ad::mean(x); });

  const std::vector<Index> offsets{0, 2, 5, 6};
  const Matrix seg = uniform(6, 3, rng);
  run("segment_sum", seg, 3, 3, [&](Tape&, const Tensor& x) { return ad::segment_sum(x, offsets); });
  run("segment_mean", seg, 3, 3, [&](Tape&, const Tensor& x) { return ad::segment_mean(x, offsets); });

  run("row_norm", a, 4, 1, [](Tape&, const Tensor& x) { return ad::row_norm(x); });
  run("cosine_similarity/lhs", a, 4, 1,
      [&](Tape& t, const Tensor& x) { return ad::cosine_similarity(x, t.constant(b)); });
  run("cosine_similarity/rhs", b, 4, 1,
      [&](Tape& t, const Tensor& x) { return ad::cosine_similarity(t.constant(a), x); });
  run("squared_error", a, 1, 1, [&](Tape& t, const Tensor& x) { return ad::squared_error(x, t.constant(b)); });
  run("mse", a, 1, 1, [&](Tape& t, const Tensor& x) { return ad::mse(t.constant(b), x); });

  Matrix targets(4, 3);
  Matrix mask = Matrix::Ones(4, 3);
  std::bernoulli_distribution coin(0.5);
  for (Index i = 0; i < targets.size(); ++i) targets.data()[i] = coin(rng) ? 1.0 : 0.0;
  mask(1, 2) = 0.0;
  mask(3, 0) = 0.0;
  run("bce_with_logits", uniform(4, 3, rng, -4, 4), 1, 1,
      [&](Tape&, const Tensor& x) { return ad::bce_with_logits(x, targets, mask); });

  const std::vector<Index> idx{2, 0, 2, 1, 3};
  run("gather_rows", a, 5, 3, [&](Tape&, const Tensor& x) { return ad::gather_rows(x, idx); });

  SparseMatrix sp(3, 4);
  std::vector<Eigen::Triplet<double>> trips{{0, 1, 1.0}, {0, 3, 2.0}, {1, 0, -1.0}, {2, 2, 0.5}};
  sp.setFromTriplets(trips.begin(), trips.end());
  run("spmm", a, 3, 3, [&](Tape&, const Tensor& x) { return ad::spmm(sp, x); });

  // Gradient-routing ops are checked against their defined (not numerical)
  // derivative: zero for stop_gradient, pass-through for straight_through.
  {
    const Matrix w = uniform(4, 3, rng);
    Tape t;
    Tensor x = t.leaf(a);
    Tensor y = ad::add(weighted_sum(ad::stop_gradient(x), w), ad::sum(ad::scale(x, 0.0)));
    t.backward(y);
    out.push_back({"stop_gradient", x.grad().cwiseAbs().maxCoeff(), 1e-300});
  }
  {
    const Matrix w = uniform(4, 3, rng);
    Tape t;
    Tensor x = t.leaf(a);
    t.backward(weighted_sum(ad::straight_through(x, b), w));
    out.push_back({"straight_through", (x.grad() - w).cwiseAbs().maxCoeff(), 1e-300});
  }
  return out;
}

ToyModel make_toy_model(std::uint64_t seed, Mode mode, Ablation ablation, TaskDescriptor task) {
  std::mt19937_64 rng(seed);
  constexpr int kTypes = 3;
  std::vector<Graph> graphs;
  for (int gi = 0; gi < 3; ++gi) {
    Graph g;
    g.id = "toy" + std::to_string(gi);
    g.num_nodes = 4 + gi;
    std::uniform_int_distribution<int> type(0, kTypes - 1);
    for (int v = 0; v < g.num_nodes; ++v) {
      g.node_types.push_back(type(rng));
      if (v > 0) {
        std::uniform_int_distribution<int> parent(0, v - 1);
        g.edges.push_back({parent(rng), v});
      }
    }
    if (task.kind == TaskKind::multilabel) {
      g.label_is_array = true;
      for (int k = 0; k < task.num_tasks; ++k) {
        // One missing entry per graph after the first task.
        if (k == 1 + gi % std::max(1, task.num_tasks - 1) && task.num_tasks > 1) {
          g.label.emplace_back(std::nullopt);
        } else {
          g.label.emplace_back(static_cast<double>((gi + k) % 2));
        }
      }
    } else if (task.kind == TaskKind::regression) {
      g.label.emplace_back(std::uniform_real_distribution<double>(-1, 1)(rng));
    } else {
      g.label.emplace_back(static_cast<double>(gi % 2));
    }
    graphs.push_back(std::move(g));
  }
  std::vector<const Graph*> ptrs;
  for (const Graph& g : graphs) ptrs.push_back(&g);

  ToyModel toy;
  toy.config.gin = GinConfig{2, 4, kTypes, 0};
  toy.config.codebook_size = 4;
  toy.config.lambda_inv = 0.5;
  toy.config.lambda_reg = 0.5;
  toy.config.lambda_cmt = 0.1;
  toy.config.gamma = 0.7;
  toy.config.mode = mode;
  toy.config.ablation = ablation;
  toy.config.task = task;
  toy.batch = make_batch(ptrs, task.num_tasks);
  toy.state = ModelState::init(toy.config, seed);
  // Zero biases meeting all-zero ReLU inputs would put pre-activations exactly
  // on the kink.
  toy.state.for_each_param([&](const std::string&, Matrix& p) {
    p += 0.1 * uniform(p.rows(), p.cols(), rng);
  });
  // Codes scattered around the encoder output, so no node sits exactly on a
  // code or on a tie between two codes.
  initialize_codebook(toy.state, toy.batch);
  Codebook& book = toy.state.codebook;
  book.codes += 0.3 * uniform(book.size(), book.dim(), rng);
  book.sums = book.codes;
  toy.perm_seed = seed + 1;
  return toy;
}

std::vector<GradCheckEntry> model_gradchecks(const ToyModel& toy, double step, double tolerance) {
  // Which parameters does this configuration reach?
  std::vector<std::pair<std::string, const Matrix*>> touched;
  std::vector<Matrix> detached;
  {
    Tape tape;
    ad::ParamBinder bind(tape, true);
    ForwardPass f = forward(toy.state, toy.config, toy.batch, bind, toy.perm_seed);
    tape.backward(f.total);
    detached = tape.detached();
    toy.state.for_each_param([&](const std::string& name, const Matrix& p) {
      if (bind.grad(p)) touched.emplace_back(name, &p);
    });
  }
  std::vector<GradCheckEntry> out;
  for (const auto& [name, param] : touched) {
    const Matrix* target = param;
    const double err = ad::grad_check(
        [&](Tape& tape, const Tensor& x) {
          tape.replay_detached(detached);
          ad::ParamBinder bind(tape, false);
          bind.bind_to(*target, x);
          return forward(toy.state, toy.config, toy.batch, bind, toy.perm_seed).total;
        },
        *param, step);
    out.push_back({name, err, tolerance});
  }
  return out;
}

}  // namespace imold
