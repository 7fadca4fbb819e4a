#include <cmath>
#include <numeric>
#include <random>

#include "milab/error.hpp"
#include "milab/estimators.hpp"
#include "milab/rng.hpp"

namespace milab {

namespace {

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double log_mean_exp(std::span<const double> xs) {
  double hi = -INFINITY;
  for (double x : xs) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc / static_cast<double>(xs.size()));
}

}  // namespace

double macro_average(std::span<const double> per_batch_estimates) {
  if (per_batch_estimates.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "macro_average: no batches");
  }
  return mean_of(per_batch_estimates);
}

double micro_average(std::span<const double> diag_scores, std::span<const double> offdiag_scores) {
  if (diag_scores.empty() || offdiag_scores.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "micro_average: no scores");
  }
  return mean_of(diag_scores) - log_mean_exp(offdiag_scores);
}

double dv_estimate(const BatchScores& batch) { return micro_average(batch.diag, batch.offdiag); }

double macro_average(std::span<const BatchScores> batches) {
  if (batches.empty()) throw Error(ErrorCode::kInvalidArgument, "macro_average: no batches");
  std::vector<double> per_batch;
  per_batch.reserve(batches.size());
  for (const auto& b : batches) per_batch.push_back(dv_estimate(b));
  return macro_average(per_batch);
}

double micro_average(std::span<const BatchScores> batches) {
  if (batches.empty()) throw Error(ErrorCode::kInvalidArgument, "micro_average: no batches");
  std::vector<double> diag, off;
  for (const auto& b : batches) {
    diag.insert(diag.end(), b.diag.begin(), b.diag.end());
    off.insert(off.end(), b.offdiag.begin(), b.offdiag.end());
  }
  return micro_average(diag, off);
}

void DiscreteRatio::validate() const {
  if (q.empty() || q.size() != ratio.size()) {
    throw Error(ErrorCode::kInvalidArgument, "DiscreteRatio: q and ratio must be non-empty and aligned");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (!(q[k] > 0.0) || !(ratio[k] >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "DiscreteRatio: q must be positive, ratio non-negative");
    }
    total += q[k];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "DiscreteRatio: q must sum to 1");
  }
}

double variance_ratio_check(const DiscreteRatio& dist, double c1, double c2, int n, int trials,
                            std::uint64_t seed) {
  dist.validate();
  if (!(c1 >= c2)) throw Error(ErrorCode::kInvalidArgument, "variance_ratio_check: need C1 >= C2");
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "variance_ratio_check: need n >= 1");
  if (trials < 1000) {
    throw Error(ErrorCode::kInvalidArgument, "variance_ratio_check: need at least 1000 trials");
  }

  auto sample_variance = [&](double c, std::uint64_t stream) {
    Rng rng(mix_seed(seed, stream));
    std::discrete_distribution<std::size_t> atom(dist.q.begin(), dist.q.end());
    const double scale = std::exp(c);
    std::vector<double> means(static_cast<std::size_t>(trials));
    for (auto& m : means) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += scale * dist.ratio[atom(rng)];
      m = acc / n;
    }
    const double mu = mean_of(means);
    double ss = 0.0;
    for (double m : means) ss += (m - mu) * (m - mu);
    return ss / (trials - 1);
  };

  const double v1 = sample_variance(c1, 11);
  const double v2 = sample_variance(c2, 12);
  if (!(v2 > 0.0)) {
    throw Error(ErrorCode::kDomain, "variance_ratio_check: zero variance for the C2 critic");
  }
  return v1 / v2;
}

}  // namespace milab
