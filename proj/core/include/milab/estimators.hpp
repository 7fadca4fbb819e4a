#pragma once

// Variational MI lower bounds evaluated on an N x N critic score matrix.
//
// Convention: diagonal entries are joint pairs (x_i, y_i); the N(N-1)
// off-diagonal entries are product-of-marginals pairs. InfoNCE is the only
// bound whose per-row denominator also includes the diagonal.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "milab/autodiff.hpp"

namespace milab {

using Matrix = ad::Matrix;

enum class EstimatorKind { kMine, kSmile, kInfoNce, kNwj, kTuba, kJs };

std::string_view to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(std::string_view name);

enum class Distance { kEuclidean, kLogEuclidean };

std::string_view to_string(Distance d);

// Families share the same regularizer statistic.
//   DV  (MINE, SMILE, InfoNCE): s = ln E_Q e^T,      target C* (default 0)
//   NWJ (NWJ, JS):              s = E_Q e^{T-1},     target 1
//   TUBA (a(y) = 1):            s = E_Q e^T,         target 1
bool is_dv_family(EstimatorKind kind);

struct RegularizerSpec {
  double lambda = 0.0;
  // Unset means the per-loss default (Euclidean for MINE/SMILE/InfoNCE/JS,
  // log-Euclidean for NWJ/TUBA).
  std::optional<Distance> distance;
  // C* for the DV family. NWJ-family targets are fixed at 1.
  double target = 0.0;

  bool active() const { return lambda > 0.0; }
};

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::kMine;
  // Clip threshold: SMILE's marginal term always, and both terms of the
  // regularized NWJ, TUBA and SMILE losses.
  double tau = 10.0;
  RegularizerSpec reg;
  // JS only: use e^{T-1} in the training objective instead of the literal
  // 1 + E_P T - E_Q e^T form.
  bool js_shifted = false;

  void validate() const;
};

Distance default_distance(EstimatorKind kind);
Distance effective_distance(const EstimatorSpec& spec);

struct LossBreakdown {
  double term1 = 0.0;
  double term2 = 0.0;
  double regularizer = 0.0;
  double training_loss = 0.0;
  double mi_estimate = 0.0;
};

struct LossGraph {
  ad::Var objective;  // training_loss; ascend this
  ad::Var term1;
  ad::Var term2;
  ad::Var penalty;    // unset when the regularizer is inactive
  LossBreakdown breakdown;
};

// Records the full training objective of `spec` on the tape.
LossGraph build_loss(ad::Var scores, const EstimatorSpec& spec);

// Convenience: evaluates on a plain matrix.
LossBreakdown evaluate(const Matrix& scores, const EstimatorSpec& spec);

LossBreakdown loss_mine(const Matrix& scores);
LossBreakdown loss_smile(const Matrix& scores, double tau = 10.0);
LossBreakdown loss_infonce(const Matrix& scores);
LossBreakdown loss_nwj(const Matrix& scores);
LossBreakdown loss_tuba(const Matrix& scores);
// training terms follow the JS objective; mi_estimate is the NWJ formula.
LossBreakdown loss_js(const Matrix& scores);

// The UNCLIPPED marginal statistic the regularizer targets for `kind`
// (see the family table above).
double marginal_statistic(const Matrix& scores, EstimatorKind kind);

// Applies the penalty lambda * d(raw_marginal_stat, target) to an existing
// breakdown: training_loss decreases by the penalty, mi_estimate is kept.
LossBreakdown regularize(const LossBreakdown& b, EstimatorKind kind, const RegularizerSpec& spec,
                         double raw_marginal_stat);

// Training terms of `kind` computed on clip(scores, -tau, tau) with the
// regularizer statistic taken from the unclipped scores.
LossBreakdown clipped_loss_terms(const Matrix& scores, EstimatorKind kind, double tau,
                                 const RegularizerSpec& reg);

// Any |score| > 700 or non-finite entry: e^700 is the double overflow frontier.
inline constexpr double kDivergenceThreshold = 700.0;
bool scores_diverged(const Matrix& scores);

// ---- averaging across batches ----------------------------------------------

double macro_average(std::span<const double> per_batch_estimates);
// DV estimate over pooled scores: mean(diag) - ln mean(e^offdiag).
double micro_average(std::span<const double> diag_scores, std::span<const double> offdiag_scores);

struct BatchScores {
  std::vector<double> diag;
  std::vector<double> offdiag;
};
double dv_estimate(const BatchScores& batch);
double macro_average(std::span<const BatchScores> batches);
double micro_average(std::span<const BatchScores> batches);

// ---- variance of the marginal term under a shifted optimal critic ------------

// Discrete Q over K atoms with known density ratio dP/dQ per atom.
struct DiscreteRatio {
  std::vector<double> q;
  std::vector<double> ratio;

  void validate() const;
};

// Monte-Carlo estimate of
//   Var_Q(E_{Q^(n)} e^{T1}) / Var_Q(E_{Q^(n)} e^{T2}),  T_k = ln dP/dQ + C_k,
// from `trials` independent n-sample means for each critic (separate
// streams, so the ratio is a genuine sampling estimate).
double variance_ratio_check(const DiscreteRatio& dist, double c1, double c2, int n, int trials,
                            std::uint64_t seed);

}  // namespace milab
