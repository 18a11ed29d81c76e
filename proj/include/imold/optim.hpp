#pragma once

#include <cmath>
#include <map>
#include <string>

#include "imold/autodiff.hpp"

namespace imold {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Grad, typename Moment, typename Param>
void adam_update(const Eigen::MatrixBase<Grad>& grad, Eigen::MatrixBase<Moment>& mom1,
                 Eigen::MatrixBase<Moment>& mom2, Eigen::MatrixBase<Param>& x, long step,
                 const AdamOptions& opt) {
  mom1 = opt.beta1 * mom1 + (1.0 - opt.beta1) * grad;
  mom2 = opt.beta2 * mom2 + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
  const double corr1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double corr2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  x.array() -= opt.lr * (mom1.array() / corr1) /
               ((mom2.array() / corr2).sqrt() + opt.epsilon);
}

// Per-parameter moment state keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Call once per optimization step, before the updates of that step.
  void begin_step() { ++step_; }
  void update(const std::string& name, Matrix& param, const Matrix& grad);

  long step() const { return step_; }
  const AdamOptions& options() const { return options_; }

 private:
  struct Moments {
    Matrix first;
    Matrix second;
  };
  AdamOptions options_;
  long step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace imold
