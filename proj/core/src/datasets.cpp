#include "milab/datasets.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "milab/error.hpp"

namespace milab {

namespace {

[[noreturn]] void invalid(const std::string& msg) {
  throw Error(ErrorCode::kInvalidArgument, msg);
}

}  // namespace

OneHotTask::OneHotTask(int classes_, std::uint64_t seed) : classes(classes_), rng(seed) {
  if (classes < 2) invalid("one-hot task needs at least 2 classes");
}

GaussianTask::GaussianTask(int dim_, std::vector<RhoStep> schedule_, std::uint64_t seed)
    : dim(dim_), schedule(std::move(schedule_)), rng(seed) {
  if (dim < 1) invalid("gaussian task needs dim >= 1");
  if (schedule.empty()) invalid("gaussian task needs a rho schedule");
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    if (!(schedule[k].rho >= 0.0 && schedule[k].rho < 1.0)) {
      invalid("gaussian task: rho must lie in [0, 1)");
    }
    if (k > 0 && schedule[k].until_iteration < schedule[k - 1].until_iteration) {
      invalid("gaussian task: schedule thresholds must be non-decreasing");
    }
  }
}

double GaussianTask::rho_at(long iteration) const {
  for (const auto& step : schedule) {
    if (iteration < step.until_iteration) return step.rho;
  }
  return schedule.back().rho;
}

ClusterTask::ClusterTask(int labels_, int input_dim_, double separation_ratio, ClusterMode mode_,
                         std::uint64_t seed, std::vector<double> label_probs_)
    : labels(labels_),
      input_dim(input_dim_),
      mode(mode_),
      label_probs(std::move(label_probs_)),
      rng(seed) {
  if (labels < 2) invalid("cluster task needs at least 2 labels");
  if (input_dim < 1) invalid("cluster task needs input_dim >= 1");
  if (!(separation_ratio > 0.0)) invalid("cluster task: separation ratio must be positive");
  if (label_probs.empty()) {
    label_probs.assign(static_cast<std::size_t>(labels), 1.0 / labels);
  }
  if (label_probs.size() != static_cast<std::size_t>(labels)) {
    invalid("cluster task: label_probs must have one entry per label");
  }
  double total = 0.0;
  for (double p : label_probs) {
    if (!(p > 0.0)) invalid("cluster task: label probabilities must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) invalid("cluster task: label probabilities must sum to 1");

  separation = 1.0;
  sigma = separation / separation_ratio;

  // Rejection-sample centers in a cube wide enough that a valid placement is
  // easy to find; deterministic under the seed.
  const double side = 3.0 * separation * std::max(1.0, std::pow(labels, 1.0 / input_dim));
  std::uniform_real_distribution<double> coord(0.0, side);
  centers.resize(labels, input_dim);
  int placed = 0;
  long attempts = 0;
  while (placed < labels) {
    if (++attempts > 1000000) invalid("cluster task: could not place separated centers");
    Eigen::RowVectorXd c(input_dim);
    for (int d = 0; d < input_dim; ++d) c(d) = coord(rng);
    bool ok = true;
    for (int k = 0; k < placed && ok; ++k) {
      ok = (centers.row(k) - c).norm() >= separation;
    }
    if (ok) centers.row(placed++) = c;
  }
}

BatchPair ClusterTask::sample_labelled(int n) {
  if (n < 1) invalid("sample_labelled needs n >= 1");
  std::discrete_distribution<int> label(label_probs.begin(), label_probs.end());
  std::normal_distribution<double> noise(0.0, sigma);
  BatchPair b;
  b.xs.resize(n, input_dim);
  b.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int y = label(rng);
    b.labels[static_cast<std::size_t>(i)] = y;
    for (int d = 0; d < input_dim; ++d) b.xs(i, d) = centers(y, d) + noise(rng);
  }
  return b;
}

int ClusterTask::nearest_center(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int best = 0;
  double best_d = INFINITY;
  for (int k = 0; k < labels; ++k) {
    const double d = (centers.row(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

struct Sampler {
  int n;
  long iteration;

  // One-hot: class index per row, then the pair (x, x).
  BatchPair operator()(OneHotTask& t) const {
    std::uniform_int_distribution<int> cls(0, t.classes - 1);
    BatchPair b;
    b.xs = Matrix::Zero(n, t.classes);
    b.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int c = cls(t.rng);
      b.labels[static_cast<std::size_t>(i)] = c;
      b.xs(i, c) = 1.0;
    }
    b.ys = b.xs;
    return b;
  }

  // Gaussian: per row, d draws for x then d draws for the noise of y.
  BatchPair operator()(GaussianTask& t) const {
    const double rho = t.rho_at(iteration);
    const double s = std::sqrt(1.0 - rho * rho);
    std::normal_distribution<double> normal(0.0, 1.0);
    BatchPair b;
    b.xs.resize(n, t.dim);
    b.ys.resize(n, t.dim);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < t.dim; ++d) b.xs(i, d) = normal(t.rng);
      for (int d = 0; d < t.dim; ++d) b.ys(i, d) = rho * b.xs(i, d) + s * normal(t.rng);
    }
    return b;
  }

  // Cluster: label, then x; contrastive mode draws a second x from the same
  // cluster immediately after the first.
  BatchPair operator()(ClusterTask& t) const {
    std::discrete_distribution<int> label(t.label_probs.begin(), t.label_probs.end());
    std::normal_distribution<double> noise(0.0, t.sigma);
    BatchPair b;
    b.xs.resize(n, t.input_dim);
    b.labels.resize(static_cast<std::size_t>(n));
    if (t.mode == ClusterMode::kSupervised) {
      b.ys = Matrix::Zero(n, t.labels);
    } else {
      b.ys.resize(n, t.input_dim);
    }
    for (int i = 0; i < n; ++i) {
      const int y = label(t.rng);
      b.labels[static_cast<std::size_t>(i)] = y;
      for (int d = 0; d < t.input_dim; ++d) b.xs(i, d) = t.centers(y, d) + noise(t.rng);
      if (t.mode == ClusterMode::kSupervised) {
        b.ys(i, y) = 1.0;
      } else {
        for (int d = 0; d < t.input_dim; ++d) b.ys(i, d) = t.centers(y, d) + noise(t.rng);
      }
    }
    return b;
  }
};

}  // namespace

BatchPair sample_joint(Task& task, int n, long iteration) {
  if (n < 2) invalid("sample_joint needs n >= 2");
  return std::visit(Sampler{n, iteration}, task);
}

double true_mi(const Task& task, long iteration) {
  struct Visitor {
    long iteration;
    double operator()(const OneHotTask& t) const { return std::log(static_cast<double>(t.classes)); }
    double operator()(const GaussianTask& t) const { return gaussian_mi(t.dim, t.rho_at(iteration)); }
    double operator()(const ClusterTask& t) const {
      double h = 0.0;
      for (double p : t.label_probs) h -= p * std::log(p);
      return h;
    }
  };
  return std::visit(Visitor{iteration}, task);
}

int x_width(const Task& task) {
  struct Visitor {
    int operator()(const OneHotTask& t) const { return t.classes; }
    int operator()(const GaussianTask& t) const { return t.dim; }
    int operator()(const ClusterTask& t) const { return t.input_dim; }
  };
  return std::visit(Visitor{}, task);
}

int y_width(const Task& task) {
  struct Visitor {
    int operator()(const OneHotTask& t) const { return t.classes; }
    int operator()(const GaussianTask& t) const { return t.dim; }
    int operator()(const ClusterTask& t) const {
      return t.mode == ClusterMode::kSupervised ? t.labels : t.input_dim;
    }
  };
  return std::visit(Visitor{}, task);
}

double gaussian_mi(int dim, double rho) { return -0.5 * dim * std::log1p(-rho * rho); }

double rho_for_target_mi(int dim, double target_mi) {
  if (!(target_mi >= 0.0)) invalid("rho_for_target_mi: target must be non-negative");
  if (dim < 1) invalid("rho_for_target_mi: dim must be positive");
  return std::sqrt(-std::expm1(-2.0 * target_mi / dim));
}

std::vector<RhoStep> staircase_schedule(int dim, const std::vector<double>& mi_steps,
                                        long iters_per_step) {
  if (mi_steps.empty()) invalid("staircase_schedule: no steps");
  if (iters_per_step < 1) invalid("staircase_schedule: iters_per_step must be positive");
  std::vector<RhoStep> out;
  for (std::size_t k = 0; k < mi_steps.size(); ++k) {
    if (k > 0 && mi_steps[k] < mi_steps[k - 1]) {
      invalid("staircase_schedule: steps must be non-decreasing");
    }
    out.push_back({static_cast<long>(k + 1) * iters_per_step, rho_for_target_mi(dim, mi_steps[k])});
  }
  return out;
}

}  // namespace milab
