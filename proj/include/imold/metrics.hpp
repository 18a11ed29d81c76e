#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imold/autodiff.hpp"

namespace imold {

using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;
using ConstMatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::vector<std::optional<double>> per_task;
  Index n_samples = 0;
};

// Mann-Whitney ROC-AUC with average ranks on ties. Throws MetricError unless
// both classes are present.
double roc_auc(const ConstVectorRef& scores, const ConstVectorRef& labels);

struct ApResult {
  std::vector<std::optional<double>> per_task;  // nullopt for tasks without positives
  double mean = 0.0;
};

// Per column: AP = sum_k (R_k - R_{k-1}) P_k over the score-sorted observed
// entries (mask != 0). Tasks without positives are left out of the mean;
// MetricError when no task qualifies.
ApResult average_precision(const ConstMatrixRef& scores, const ConstMatrixRef& labels,
                           const ConstMatrixRef& mask);
double average_precision(const ConstVectorRef& scores, const ConstVectorRef& labels);

double mae(const ConstVectorRef& preds, const ConstVectorRef& targets);

// Fraction of logits whose sign matches the 0/1 label (logit > 0 -> 1).
double accuracy(const ConstVectorRef& logits, const ConstVectorRef& labels);

}  // namespace imold
