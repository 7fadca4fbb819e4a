#pragma once

#include <vector>

#include "milab/autodiff.hpp"

namespace milab {

struct OptimizerSpec {
  enum class Kind { kSgd, kAdam };
  Kind kind = Kind::kSgd;
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerSpec sgd(double lr) { return {Kind::kSgd, lr}; }
  static OptimizerSpec adam(double lr = 1e-3) { return {Kind::kAdam, lr}; }

  // Throws Error(kValidation) unless lr > 0 and 0 <= beta1, beta2 < 1.
  void validate() const;
};

// Gradient ASCENT on an objective: theta <- theta + step(grad).
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec);

  // Returns false and leaves params untouched when any gradient entry is
  // non-finite. Shapes of params and grads must match.
  bool step(std::vector<ad::Matrix>& params, const std::vector<ad::Matrix>& grads);

  const OptimizerSpec& spec() const { return spec_; }
  long steps_taken() const { return t_; }

 private:
  OptimizerSpec spec_;
  long t_ = 0;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
};

}  // namespace milab
