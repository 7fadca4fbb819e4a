#include "milab/estimators.hpp"

#include <cmath>
#include <string>

#include "milab/error.hpp"

namespace milab {

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kMine: return "mine";
    case EstimatorKind::kSmile: return "smile";
    case EstimatorKind::kInfoNce: return "infonce";
    case EstimatorKind::kNwj: return "nwj";
    case EstimatorKind::kTuba: return "tuba";
    case EstimatorKind::kJs: return "js";
  }
  return "mine";
}

EstimatorKind estimator_from_string(std::string_view name) {
  for (EstimatorKind k : {EstimatorKind::kMine, EstimatorKind::kSmile, EstimatorKind::kInfoNce,
                          EstimatorKind::kNwj, EstimatorKind::kTuba, EstimatorKind::kJs}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::kValidation, "unknown estimator '" + std::string(name) +
                                          "' (expected mine, smile, infonce, nwj, tuba or js)");
}

std::string_view to_string(Distance d) {
  return d == Distance::kEuclidean ? "euclidean" : "log_euclidean";
}

bool is_dv_family(EstimatorKind kind) {
  return kind == EstimatorKind::kMine || kind == EstimatorKind::kSmile ||
         kind == EstimatorKind::kInfoNce;
}

Distance default_distance(EstimatorKind kind) {
  return (kind == EstimatorKind::kNwj || kind == EstimatorKind::kTuba) ? Distance::kLogEuclidean
                                                                       : Distance::kEuclidean;
}

Distance effective_distance(const EstimatorSpec& spec) {
  return spec.reg.distance.value_or(default_distance(spec.kind));
}

void EstimatorSpec::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::kValidation, "estimator: tau must be positive");
  }
  if (!(reg.lambda >= 0.0) || !std::isfinite(reg.lambda)) {
    throw Error(ErrorCode::kValidation, "estimator: lambda must be a non-negative number");
  }
  if (!std::isfinite(reg.target)) {
    throw Error(ErrorCode::kValidation, "estimator: target must be finite");
  }
  if (reg.active() && is_dv_family(kind) && effective_distance(*this) == Distance::kLogEuclidean &&
      !(reg.target > 0.0)) {
    throw Error(ErrorCode::kValidation,
                "estimator: log-Euclidean distance needs a positive target C*");
  }
}

bool scores_diverged(const Matrix& scores) {
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double s = scores.data()[i];
    if (!std::isfinite(s) || std::abs(s) > kDivergenceThreshold) return true;
  }
  return false;
}

namespace {

bool clips_when_regularized(EstimatorKind kind) {
  return kind == EstimatorKind::kSmile || kind == EstimatorKind::kNwj ||
         kind == EstimatorKind::kTuba;
}

// ln of the regularizer statistic, from unclipped off-diagonal scores.
ad::Var log_marginal_statistic(ad::Var off, EstimatorKind kind) {
  ad::Var lme = ad::logmeanexp(off);
  if (kind == EstimatorKind::kNwj || kind == EstimatorKind::kJs) return lme - 1.0;
  return lme;
}

ad::Var penalty_distance(ad::Var off, const EstimatorSpec& spec) {
  ad::Var log_stat = log_marginal_statistic(off, spec.kind);
  const Distance d = effective_distance(spec);
  if (is_dv_family(spec.kind)) {
    // The DV statistic already lives on the log scale.
    if (d == Distance::kEuclidean) return ad::square(log_stat - spec.reg.target);
    return ad::square(ad::log(log_stat) - std::log(spec.reg.target));
  }
  if (d == Distance::kLogEuclidean) return ad::square(log_stat);
  return ad::square(ad::exp(log_stat) - 1.0);
}

LossGraph build(ad::Var scores, const EstimatorSpec& spec, bool force_clip) {
  spec.validate();
  const Eigen::Index n = scores.rows();
  if (n != scores.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "estimator: score matrix must be square");
  }
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "estimator: batch size must be at least 2");

  const EstimatorKind kind = spec.kind;
  const double tau = spec.tau;
  const bool regularized = spec.reg.active();
  const bool clip_terms = force_clip || (regularized && clips_when_regularized(kind));

  ad::Var diag = ad::diagonal(scores);
  ad::Var off = ad::off_diagonal(scores);
  ad::Var diag_t = clip_terms ? ad::clip(diag, -tau, tau) : diag;
  ad::Var off_t =
      (clip_terms || kind == EstimatorKind::kSmile) ? ad::clip(off, -tau, tau) : off;

  LossGraph g;
  g.term1 = ad::mean(diag_t);
  switch (kind) {
    case EstimatorKind::kMine:
    case EstimatorKind::kSmile:
      g.term2 = ad::logmeanexp(off_t);
      break;
    case EstimatorKind::kInfoNce:
      g.term2 = ad::mean(ad::row_logsumexp(clip_terms ? ad::clip(scores, -tau, tau) : scores)) -
                std::log(static_cast<double>(n));
      break;
    case EstimatorKind::kNwj:
      g.term2 = ad::mean(ad::exp(off_t - 1.0));
      break;
    case EstimatorKind::kTuba:
      g.term2 = ad::mean(ad::exp(off_t)) - 1.0;
      break;
    case EstimatorKind::kJs:
      g.term2 = spec.js_shifted ? ad::mean(ad::exp(off_t - 1.0)) : ad::mean(ad::exp(off_t)) - 1.0;
      break;
  }
  ad::Var unpenalized = g.term1 - g.term2;

  // The reported estimate is the original bound on unclipped inputs (SMILE
  // keeps its own marginal clip); JS reports the NWJ formula.
  double estimate = 0.0;
  if (kind == EstimatorKind::kJs) {
    estimate = (ad::mean(diag) - ad::mean(ad::exp(off - 1.0))).scalar();
  } else if (!clip_terms) {
    estimate = unpenalized.scalar();
  } else {
    ad::Var t1 = ad::mean(diag);
    switch (kind) {
      case EstimatorKind::kSmile:
        estimate = (t1 - ad::logmeanexp(ad::clip(off, -tau, tau))).scalar();
        break;
      case EstimatorKind::kNwj:
        estimate = (t1 - ad::mean(ad::exp(off - 1.0))).scalar();
        break;
      case EstimatorKind::kTuba:
        estimate = (t1 - (ad::mean(ad::exp(off)) - 1.0)).scalar();
        break;
      case EstimatorKind::kMine:
        estimate = (t1 - ad::logmeanexp(off)).scalar();
        break;
      case EstimatorKind::kInfoNce:
        estimate = (t1 - (ad::mean(ad::row_logsumexp(scores)) - std::log(static_cast<double>(n))))
                       .scalar();
        break;
      case EstimatorKind::kJs:
        break;
    }
  }

  g.objective = unpenalized;
  if (regularized) {
    g.penalty = spec.reg.lambda * penalty_distance(off, spec);
    g.objective = unpenalized - g.penalty;
  }

  g.breakdown.term1 = g.term1.scalar();
  g.breakdown.term2 = g.term2.scalar();
  g.breakdown.regularizer = regularized ? g.penalty.scalar() : 0.0;
  g.breakdown.training_loss = g.objective.scalar();
  g.breakdown.mi_estimate = estimate;
  return g;
}

}  // namespace

LossGraph build_loss(ad::Var scores, const EstimatorSpec& spec) {
  return build(scores, spec, false);
}

LossBreakdown evaluate(const Matrix& scores, const EstimatorSpec& spec) {
  ad::Tape tape;
  return build_loss(tape.leaf(scores), spec).breakdown;
}

LossBreakdown loss_mine(const Matrix& scores) {
  EstimatorSpec spec;
  spec.kind = EstimatorKind::kMine;
  return evaluate(scores, spec);
}

LossBreakdown loss_smile(const Matrix& scores, double tau) {
  EstimatorSpec spec;
  spec.kind = EstimatorKind::kSmile;
  spec.tau = tau;
  return evaluate(scores, spec);
}

LossBreakdown loss_infonce(const Matrix& scores) {
  EstimatorSpec spec;
  spec.kind = EstimatorKind::kInfoNce;
  return evaluate(scores, spec);
}

LossBreakdown loss_nwj(const Matrix& scores) {
  EstimatorSpec spec;
  spec.kind = EstimatorKind::kNwj;
  return evaluate(scores, spec);
}

LossBreakdown loss_tuba(const Matrix& scores) {
  EstimatorSpec spec;
  spec.kind = EstimatorKind::kTuba;
  return evaluate(scores, spec);
}

LossBreakdown loss_js(const Matrix& scores) {
  EstimatorSpec spec;
  spec.kind = EstimatorKind::kJs;
  return evaluate(scores, spec);
}

double marginal_statistic(const Matrix& scores, EstimatorKind kind) {
  ad::Tape tape;
  ad::Var off = ad::off_diagonal(tape.leaf(scores));
  const double log_stat = log_marginal_statistic(off, kind).scalar();
  return is_dv_family(kind) ? log_stat : std::exp(log_stat);
}

LossBreakdown regularize(const LossBreakdown& b, EstimatorKind kind, const RegularizerSpec& spec,
                         double raw_marginal_stat) {
  if (!(spec.lambda >= 0.0)) {
    throw Error(ErrorCode::kValidation, "regularize: lambda must be non-negative");
  }
  if (!spec.active()) return b;
  const Distance d = spec.distance.value_or(default_distance(kind));
  const double target = is_dv_family(kind) ? spec.target : 1.0;
  double dist = 0.0;
  if (d == Distance::kEuclidean) {
    dist = (raw_marginal_stat - target) * (raw_marginal_stat - target);
  } else {
    if (!(raw_marginal_stat > 0.0) || !(target > 0.0)) {
      throw Error(ErrorCode::kDomain,
                  "regularize: log-Euclidean distance needs a positive statistic and target");
    }
    const double diff = std::log(raw_marginal_stat) - std::log(target);
    dist = diff * diff;
  }
  LossBreakdown out = b;
  out.regularizer = spec.lambda * dist;
  out.training_loss = b.training_loss - out.regularizer;
  return out;
}

LossBreakdown clipped_loss_terms(const Matrix& scores, EstimatorKind kind, double tau,
                                 const RegularizerSpec& reg) {
  ad::Tape tape;
  EstimatorSpec spec{.kind = kind, .tau = tau, .reg = reg};
  return build(tape.leaf(scores), spec, true).breakdown;
}

}  // namespace milab
