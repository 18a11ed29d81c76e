#include "imold/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace imold {

double roc_auc(const ConstVectorRef& scores, const ConstVectorRef& labels) {
  if (scores.size() != labels.size()) throw ContractError("roc_auc: length mismatch");
  const Index n = scores.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&scores](Index a, Index b) { return scores(a) < scores(b); });
  // Average 1-based ranks over runs of tied scores.
  std::vector<double> rank(static_cast<std::size_t>(n));
  for (Index i = 0; i < n;) {
    Index j = i;
    while (j + 1 < n && scores(order[static_cast<std::size_t>(j + 1)]) ==
                            scores(order[static_cast<std::size_t>(i)])) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = avg;
    i = j + 1;
  }
  double pos = 0.0;
  double rank_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (labels(i) != 0.0 && labels(i) != 1.0) throw ContractError("roc_auc: labels must be 0/1");
    if (labels(i) == 1.0) {
      pos += 1.0;
      rank_sum += rank[static_cast<std::size_t>(i)];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw MetricError("roc_auc: undefined with a single class");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

namespace {

std::optional<double> task_ap(const std::vector<std::pair<double, double>>& scored) {
  double positives = 0.0;
  for (const auto& [_, y] : scored) positives += y;
  if (positives == 0.0) return std::nullopt;
  std::vector<std::pair<double, double>> sorted = scored;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  double tp = 0.0;
  double ap = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k].second == 1.0) {
      tp += 1.0;
      // Recall steps by 1/positives exactly at each positive.
      ap += (tp / static_cast<double>(k + 1)) / positives;
    }
  }
  return ap;
}

}  // namespace

ApResult average_precision(const ConstMatrixRef& scores, const ConstMatrixRef& labels,
                           const ConstMatrixRef& mask) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols() ||
      scores.rows() != mask.rows() || scores.cols() != mask.cols()) {
    throw ContractError("average_precision: shape mismatch");
  }
  ApResult r;
  double total = 0.0;
  int valid = 0;
  for (Index t = 0; t < scores.cols(); ++t) {
    std::vector<std::pair<double, double>> scored;
    for (Index i = 0; i < scores.rows(); ++i) {
      if (mask(i, t) == 0.0) continue;
      if (labels(i, t) != 0.0 && labels(i, t) != 1.0) {
        throw ContractError("average_precision: labels must be 0/1");
      }
      scored.emplace_back(scores(i, t), labels(i, t));
    }
    auto ap = task_ap(scored);
    r.per_task.push_back(ap);
    if (ap) {
      total += *ap;
      ++valid;
    }
  }
  if (valid == 0) throw MetricError("average_precision: no task has a positive label");
  r.mean = total / valid;
  return r;
}

double average_precision(const ConstVectorRef& scores, const ConstVectorRef& labels) {
  const Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(scores.size(), 1);
  return average_precision(ConstMatrixRef(scores), ConstMatrixRef(labels), mask).mean;
}

double mae(const ConstVectorRef& preds, const ConstVectorRef& targets) {
  if (preds.size() != targets.size()) throw ContractError("mae: length mismatch");
  if (preds.size() == 0) throw ContractError("mae: empty input");
  return (preds - targets).cwiseAbs().mean();
}

double accuracy(const ConstVectorRef& logits, const ConstVectorRef& labels) {
  if (logits.size() != labels.size()) throw ContractError("accuracy: length mismatch");
  if (logits.size() == 0) throw ContractError("accuracy: empty input");
  Index hits = 0;
  for (Index i = 0; i < logits.size(); ++i) {
    const double predicted = logits(i) > 0.0 ? 1.0 : 0.0;
    if (predicted == labels(i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.size());
}

}  // namespace imold
