#include "imold/optim.hpp"

namespace imold {

void Adam::update(const std::string& name, Matrix& param, const Matrix& grad) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw DimensionError("adam: gradient shape differs for " + name);
  }
  if (step_ == 0) throw ContractError("adam: begin_step() not called");
  auto [it, fresh] = moments_.try_emplace(name);
  if (fresh) {
    it->second.first = Matrix::Zero(param.rows(), param.cols());
    it->second.second = Matrix::Zero(param.rows(), param.cols());
  }
  adam_update(grad, it->second.first, it->second.second, param, step_, options_);
}

}  // namespace imold
