#include <algorithm>
#include <cmath>
#include <vector>

#include "milab/autodiff.hpp"
#include "milab/error.hpp"

namespace milab::ad {

namespace {

double evaluate(const Program& program, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p));
  const double v = program(tape, vars).scalar();
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNonFinite, "grad_check: program is non-finite at a probe point");
  }
  return v;
}

}  // namespace

GradCheckResult grad_check(const Program& program, std::span<const Matrix> params, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grad_check: eps must be positive");

  std::vector<Matrix> point(params.begin(), params.end());

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : point) vars.push_back(tape.leaf(p));
    Var loss = program(tape, vars);
    if (!std::isfinite(loss.scalar())) {
      throw Error(ErrorCode::kNonFinite, "grad_check: program is non-finite at the base point");
    }
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }

  std::vector<Matrix> numeric;
  for (std::size_t k = 0; k < point.size(); ++k) {
    Matrix g(point[k].rows(), point[k].cols());
    for (Eigen::Index e = 0; e < point[k].size(); ++e) {
      double& x = point[k].data()[e];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate(program, point);
      x = saved - eps;
      const double down = evaluate(program, point);
      x = saved;
      g.data()[e] = (up - down) / (2.0 * eps);
    }
    numeric.push_back(std::move(g));
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < point.size(); ++k) {
    result.max_gradient = std::max(
        {result.max_gradient, analytic[k].cwiseAbs().maxCoeff(), numeric[k].cwiseAbs().maxCoeff()});
  }
  const double floor = std::max(1e-10, 1e-3 * result.max_gradient);
  for (std::size_t k = 0; k < point.size(); ++k) {
    for (Eigen::Index e = 0; e < point[k].size(); ++e) {
      const double a = analytic[k].data()[e];
      const double n = numeric[k].data()[e];
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(a - n) / denom);
    }
  }
  return result;
}

}  // namespace milab::ad
