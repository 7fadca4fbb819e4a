#include <algorithm>
#include <cmath>
#include <limits>

#include "milab/error.hpp"
#include "milab/trainer.hpp"

namespace milab {

namespace {

// Least-squares slope of y against x.
double slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw Error(ErrorCode::kInvalidArgument, "drift_metric: iterations must vary");
  return sxy / sxx;
}

}  // namespace

DriftMetric drift_metric(std::span<const RunRecord> records, std::size_t window,
                         const DriftThresholds& thresholds) {
  if (window < 10) {
    throw Error(ErrorCode::kInvalidArgument, "drift_metric: window must cover at least 10 records");
  }
  if (window > records.size()) {
    throw Error(ErrorCode::kInvalidArgument, "drift_metric: window exceeds the logged length");
  }
  auto tail = records.subspan(records.size() - window);
  std::vector<double> t;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> d;
  for (const auto& r : tail) {
    t.push_back(static_cast<double>(r.iter) / 1000.0);
    a.push_back(r.term1);
    b.push_back(r.term2);
    d.push_back(r.term1 - r.term2);
  }
  DriftMetric m;
  m.slope_term1 = slope(t, a);
  m.slope_term2 = slope(t, b);
  m.slope_diff = slope(t, d);
  m.drifting = std::abs(m.slope_term1) > thresholds.drift &&
               std::abs(m.slope_term2) > thresholds.drift &&
               std::abs(m.slope_diff) < thresholds.stable;
  return m;
}

std::size_t records_in_last(std::span<const RunRecord> records, long iterations) {
  if (records.empty()) return 0;
  const long last = records.back().iter;
  std::size_t n = 0;
  for (auto it = records.rbegin(); it != records.rend() && it->iter > last - iterations; ++it) ++n;
  return n;
}

std::vector<double> ema_smooth(std::span<const double> series, double alpha) {
  if (series.empty()) throw Error(ErrorCode::kInvalidArgument, "ema_smooth: empty series");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "ema_smooth: alpha must lie in (0, 1]");
  }
  std::vector<double> out(series.size());
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double x = series[t];
    if (std::isnan(x)) {
      out[t] = x;
    } else if (std::isnan(prev)) {
      out[t] = x;
    } else {
      out[t] = alpha * x + (1.0 - alpha) * prev;
    }
    prev = out[t];
  }
  return out;
}

double tail_mean(std::span<const double> values, double fraction) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto count = static_cast<std::size_t>(
      std::max(1.0, std::ceil(fraction * static_cast<double>(values.size()))));
  double total = 0.0;
  std::size_t finite = 0;
  for (std::size_t i = values.size() - std::min(count, values.size()); i < values.size(); ++i) {
    if (std::isfinite(values[i])) {
      total += values[i];
      ++finite;
    }
  }
  return finite == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(finite);
}

namespace {

Eigen::Index argmax_row(const Matrix& m, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = j;
  }
  return best;
}

}  // namespace

double evaluate_accuracy(const EmbedFn& embed, ClusterTask& task, int test_n, int train_pool) {
  if (test_n < 1) throw Error(ErrorCode::kInvalidArgument, "evaluate_accuracy: test_n must be positive");
  if (task.mode == ClusterMode::kSupervised) {
    BatchPair test = task.sample_labelled(test_n);
    const Matrix logits = embed(test.xs);
    if (logits.cols() != task.labels) {
      throw Error(ErrorCode::kShapeMismatch, "evaluate_accuracy: expected one logit per label");
    }
    int correct = 0;
    for (int i = 0; i < test_n; ++i) {
      if (argmax_row(logits, i) == test.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / test_n;
  }

  if (train_pool < 1) throw Error(ErrorCode::kInvalidArgument, "evaluate_accuracy: empty training pool");
  BatchPair pool = task.sample_labelled(train_pool);
  BatchPair test = task.sample_labelled(test_n);
  const Matrix sim = embed(test.xs) * embed(pool.xs).transpose();
  int correct = 0;
  for (int i = 0; i < test_n; ++i) {
    const auto j = static_cast<std::size_t>(argmax_row(sim, i));
    if (pool.labels[j] == test.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / test_n;
}

double evaluate_accuracy(const Critic& critic, ClusterTask& task, int test_n, int train_pool) {
  const CriticKind want =
      task.mode == ClusterMode::kSupervised ? CriticKind::kOneHotLabel : CriticKind::kSeparable;
  if (critic.kind() != want) {
    throw Error(ErrorCode::kInvalidArgument,
                "evaluate_accuracy: critic kind does not match the task mode");
  }
  return evaluate_accuracy([&](const Matrix& xs) { return critic.embed(xs); }, task, test_n,
                           train_pool);
}

}  // namespace milab
