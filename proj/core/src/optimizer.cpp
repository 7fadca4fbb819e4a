#include "milab/optimizer.hpp"

#include <cmath>

#include "milab/error.hpp"

namespace milab {

void OptimizerSpec::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorCode::kValidation, "optimizer: lr must be positive");
  if (kind == Kind::kAdam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error(ErrorCode::kValidation, "optimizer: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw Error(ErrorCode::kValidation, "optimizer: epsilon must be positive");
  }
}

Optimizer::Optimizer(OptimizerSpec spec) : spec_(spec) { spec_.validate(); }

bool Optimizer::step(std::vector<ad::Matrix>& params, const std::vector<ad::Matrix>& grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::kShapeMismatch, "optimizer: parameter/gradient count mismatch");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].rows() != grads[k].rows() || params[k].cols() != grads[k].cols()) {
      throw Error(ErrorCode::kShapeMismatch, "optimizer: gradient shape mismatch");
    }
    if (!grads[k].allFinite()) return false;
  }

  if (spec_.kind == OptimizerSpec::Kind::kSgd) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k] += spec_.lr * grads[k];
    ++t_;
    return true;
  }

  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(ad::Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(ad::Matrix::Zero(p.rows(), p.cols()));
    }
  }
  ++t_;
  const double b1 = spec_.beta1, b2 = spec_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = b1 * m_[k] + (1.0 - b1) * grads[k];
    v_[k] = b2 * v_[k] + (1.0 - b2) * grads[k].cwiseAbs2();
    params[k].array() +=
        spec_.lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + spec_.epsilon);
  }
  return true;
}

}  // namespace milab
