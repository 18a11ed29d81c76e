#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "imold/metrics.hpp"

using namespace imold;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Pairwise definition: P(score_pos > score_neg) + 0.5 P(equal).
double auc_by_pairs(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
  double wins = 0.0, pairs = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    for (Index j = 0; j < s.size(); ++j) {
      if (y(i) == 1.0 && y(j) == 0.0) {
        pairs += 1.0;
        wins += s(i) > s(j) ? 1.0 : (s(i) == s(j) ? 0.5 : 0.0);
      }
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("roc-auc examples") {
  CHECK(roc_auc(vec({0.2, 0.8}), vec({0, 1})) == 1.0);
  CHECK(roc_auc(vec({0.8, 0.2}), vec({0, 1})) == 0.0);
  CHECK(roc_auc(vec({0.4, 0.4, 0.4}), vec({0, 1, 1})) == 0.5);
  CHECK_THROWS_AS(roc_auc(vec({0.1, 0.2}), vec({1, 1})), MetricError);
  CHECK_THROWS_AS(roc_auc(vec({0.1, 0.2}), vec({0, 1, 1})), Error);
}

TEST_CASE("roc-auc equals the pairwise count, with ties") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 30);
    Eigen::VectorXd s(n), y(n);
    for (Index i = 0; i < n; ++i) {
      s(i) = level(rng) * 0.25;
      y(i) = static_cast<double>(rng() % 2);
    }
    y(0) = 0.0;
    y(1) = 1.0;
    CHECK(roc_auc(s, y) == doctest::Approx(auc_by_pairs(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("roc-auc: monotone invariance and AUC(s) + AUC(-s) = 1") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = 20;
    Eigen::VectorXd s(m), y(m);
    for (Index i = 0; i < m; ++i) {
      s(i) = n(rng);
      y(i) = i % 3 == 0 ? 1.0 : 0.0;
    }
    const double a = roc_auc(s, y);
    Eigen::VectorXd t = s.unaryExpr([](double x) { return std::exp(3.0 * x) + 7.0; });
    CHECK(roc_auc(t, y) == a);
    CHECK(a + roc_auc(-s, y) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("average precision examples") {
  CHECK(average_precision(vec({0.9, 0.5, 0.3, 0.1}), vec({1, 0, 0, 0})) == 1.0);
  CHECK(average_precision(vec({0.9, 0.5, 0.3, 0.1}), vec({0, 0, 0, 1})) == 0.25);
  CHECK(average_precision(vec({0.9, 0.8, 0.7}), vec({1, 0, 1})) ==
        doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("average precision over tasks skips tasks without positives") {
  Matrix s(4, 3), y(4, 3), mask = Matrix::Ones(4, 3);
  s << 0.9, 0.1, 0.5,
       0.5, 0.2, 0.6,
       0.3, 0.3, 0.7,
       0.1, 0.4, 0.8;
  y << 1, 0, 0,
       0, 0, 0,
       0, 0, 0,
       0, 1, 0;
  ApResult r = average_precision(s, y, mask);
  REQUIRE(r.per_task.size() == 3);
  CHECK(*r.per_task[0] == 1.0);
  CHECK(*r.per_task[1] == 1.0);
  CHECK(!r.per_task[2]);
  CHECK(r.mean == 1.0);

  // Masked entries are ignored: task 0 ranks neg, pos, neg.
  mask(0, 0) = 0.0;
  y(2, 0) = 1.0;
  ApResult m = average_precision(s, y, mask);
  CHECK(*m.per_task[0] == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(average_precision(s, Matrix::Zero(4, 3), Matrix::Ones(4, 3)), MetricError);
}

TEST_CASE("mae and accuracy") {
  CHECK(mae(vec({1, 2, 3}), vec({1, 2, 3})) == 0.0);
  CHECK(mae(vec({0, 2}), vec({1, 1})) == 1.0);
  CHECK_THROWS_AS(mae(Eigen::VectorXd(0), Eigen::VectorXd(0)), ContractError);
  CHECK_THROWS_AS(mae(vec({1}), vec({1, 2})), Error);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd p(10), t(10);
    for (Index i = 0; i < 10; ++i) {
      p(i) = n(rng);
      t(i) = n(rng);
    }
    const double c = n(rng);
    CHECK(std::abs(mae(p.array() + c, t) - mae(p, t)) <= std::abs(c) + 1e-12);
  }

  CHECK(accuracy(vec({2.0, -1.0, 0.5, -3.0}), vec({1, 0, 0, 0})) == 0.75);
}
