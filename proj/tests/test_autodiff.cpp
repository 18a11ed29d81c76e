#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "imold/autodiff.hpp"
#include "imold/gradcheck.hpp"

using namespace imold;
using ad::Tape;
using ad::Tensor;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("forward values of the basic ops") {
  Tape t;
  CHECK(ad::add(t.constant(row({1, 2})), t.constant(row({3, 4}))).value() == row({4, 6}));
  CHECK(ad::sigmoid(t.constant(row({0}))).item() == 0.5);
  CHECK(ad::cosine_similarity(t.constant(row({1, 0})), t.constant(row({0, 1}))).item() == 0.0);
  CHECK(ad::concat_cols(t.constant(row({1})), t.constant(row({2, 3}))).value() == row({1, 2, 3}));
  CHECK(ad::abs(t.constant(row({-2, 3}))).value() == row({2, 3}));
  CHECK(ad::relu(t.constant(row({-2, 3}))).value() == row({0, 3}));
  CHECK(ad::mean(t.constant(row({1, 2, 3, 6}))).item() == 3.0);
  CHECK(ad::squared_error(t.constant(row({1, 2})), t.constant(row({0, 0}))).item() == 5.0);
}

TEST_CASE("sigmoid stays finite and saturates at extreme inputs") {
  Tape t;
  Matrix s = ad::sigmoid(t.constant(row({-800, 800}))).value();
  CHECK(s(0, 0) == 0.0);
  CHECK(s(0, 1) == 1.0);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  Tape t;
  try {
    ad::add(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(3, 2)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("3x2") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(2, 3))),
                  DimensionError);
}

TEST_CASE("backward of x*x at 3 is 6") {
  Tape t;
  Tensor x = t.leaf(row({3}));
  t.backward(ad::mul(x, x));
  CHECK(x.grad()(0, 0) == 6.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tape t;
  Tensor x = t.leaf(row({1, 2}));
  CHECK_THROWS_AS(t.backward(ad::scale(x, 2.0)), ContractError);
}

TEST_CASE("stop gradient: d(sg[x] y)/dx = 0 and d/dy = x") {
  Tape t;
  Tensor x = t.leaf(row({2, -1}));
  Tensor y = t.leaf(row({5, 7}));
  t.backward(ad::sum(ad::mul(ad::stop_gradient(x), y)));
  CHECK(x.grad() == Matrix::Zero(1, 2));
  CHECK(y.grad() == row({2, -1}));
}

TEST_CASE("stop gradient is the identity in the forward pass") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Matrix m(5, 4);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng) * 1e10;
  Tape t;
  Tensor x = t.leaf(m);
  CHECK(ad::stop_gradient(x).value() == m);
}

TEST_CASE("grad_check: sum(sigmoid(x)) on random x") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix x(1, 8);
  for (Index i = 0; i < 8; ++i) x(0, i) = u(rng);
  const double err =
      ad::grad_check([](Tape&, const Tensor& v) { return ad::sum(ad::sigmoid(v)); }, x);
  CHECK(err < 1e-6);
}

TEST_CASE("mse(x, 0) at [1,2] has gradient [1,2]") {
  Tape t;
  Tensor x = t.leaf(row({1, 2}));
  t.backward(ad::mse(x, t.constant(Matrix::Zero(1, 2))));
  CHECK(std::abs(x.grad()(0, 0) - 1.0) < 1e-8);
  CHECK(std::abs(x.grad()(0, 1) - 2.0) < 1e-8);
  const double err = ad::grad_check(
      [](Tape& tp, const Tensor& v) { return ad::mse(v, tp.constant(Matrix::Zero(1, 2))); },
      row({1, 2}));
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check reports non-finite values") {
  CHECK_THROWS_AS(ad::grad_check([](Tape&, const Tensor& v) { return ad::sum(ad::scale(v, NAN)); },
                                 row({1})),
                  NumericError);
}

TEST_CASE("every primitive passes its finite-difference check") {
  for (const GradCheckEntry& e : primitive_gradchecks()) {
    CAPTURE(e.name);
    CAPTURE(e.max_rel_error);
    CHECK(e.passed());
  }
}

TEST_CASE("segment ops") {
  Tape t;
  Matrix m(4, 2);
  m << 1, 2, 3, 4, 5, 6, 7, 8;
  const std::vector<Index> one{0, 4};
  CHECK(ad::segment_mean(t.constant(m), one).value() == m.colwise().mean());

  const std::vector<Index> two{0, 1, 4};
  Matrix s = ad::segment_sum(t.constant(m), two).value();
  CHECK(s.row(0) == m.row(0));
  CHECK(s.row(1) == m.bottomRows(3).colwise().sum());

  // Reordering rows inside a segment leaves the result unchanged.
  Matrix p = m;
  p.row(1) = m.row(3);
  p.row(3) = m.row(1);
  CHECK(ad::segment_mean(t.constant(p), two).value().isApprox(ad::segment_mean(t.constant(m), two).value(), 1e-15));

  const std::vector<Index> bad{0, 2, 2, 4};
  CHECK_THROWS_AS(ad::segment_mean(t.constant(m), bad), ContractError);
  const std::vector<Index> short_end{0, 3};
  CHECK_THROWS_AS(ad::segment_sum(t.constant(m), short_end), ContractError);
}

TEST_CASE("bce with logits is stable and masked") {
  Tape t;
  Matrix logits(2, 2);
  logits << 0, 1000, -1000, 3;
  Matrix targets(2, 2);
  targets << 1, 1, 0, 0;
  Matrix mask(2, 2);
  mask << 1, 1, 1, 0;
  const double loss = ad::bce_with_logits(t.constant(logits), targets, mask).item();
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(std::log(2.0) / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(ad::bce_with_logits(t.constant(logits), targets, Matrix::Zero(2, 2)),
                  ContractError);
}

TEST_CASE("cosine similarity guards zero vectors") {
  Tape t;
  Tensor z = t.leaf(Matrix::Zero(1, 3));
  Tensor c = ad::cosine_similarity(z, t.constant(row({1, 2, 3})));
  CHECK(c.item() == 0.0);
  t.backward(ad::sum(c));
  CHECK(z.grad().allFinite());
}

TEST_CASE("gradients accumulate over repeated uses and reset between backward calls") {
  Tape t;
  Tensor x = t.leaf(row({1, 2}));
  Tensor y = ad::sum(ad::add(ad::scale(x, 3.0), x));
  t.backward(y);
  CHECK(x.grad() == row({4, 4}));
  t.backward(y);
  CHECK(x.grad() == row({4, 4}));
}

TEST_CASE("gather_rows and spmm route gradients back") {
  Tape t;
  Tensor x = t.leaf(Matrix::Ones(3, 2));
  const std::vector<Index> idx{2, 2, 0};
  t.backward(ad::sum(ad::gather_rows(x, idx)));
  Matrix want(3, 2);
  want << 1, 1, 0, 0, 2, 2;
  CHECK(x.grad() == want);

  SparseMatrix a(2, 3);
  a.insert(0, 1) = 2.0;
  a.insert(1, 2) = -1.0;
  a.makeCompressed();
  Tape t2;
  Tensor y = t2.leaf(Matrix::Ones(3, 2));
  t2.backward(ad::sum(ad::spmm(a, y)));
  Matrix want2(3, 2);
  want2 << 0, 0, 2, 2, -1, -1;
  CHECK(y.grad() == want2);
}

TEST_CASE("parameter binder creates one leaf per parameter") {
  Tape t;
  Matrix w = Matrix::Constant(1, 1, 2.0);
  ad::ParamBinder bind(t);
  Tensor a = bind(w);
  Tensor b = bind(w);
  CHECK(a.id() == b.id());
  t.backward(ad::sum(ad::mul(a, b)));
  REQUIRE(bind.grad(w) != nullptr);
  CHECK((*bind.grad(w))(0, 0) == 4.0);
  Matrix other(1, 1);
  CHECK(bind.grad(other) == nullptr);
}

TEST_CASE("replayed detached values hold stop-gradient inputs fixed") {
  Tape base;
  Tensor x = base.leaf(row({1, 2}));
  ad::stop_gradient(x);
  REQUIRE(base.detached().size() == 1);

  Tape replay;
  replay.replay_detached(base.detached());
  Tensor x2 = replay.leaf(row({5, 5}));
  CHECK(ad::stop_gradient(x2).value() == row({1, 2}));
  CHECK_THROWS_AS(ad::stop_gradient(x2), ContractError);
}
