#pragma once

// Synthetic tasks whose true mutual information is known in closed form.

#include <cstdint>
#include <variant>
#include <vector>

#include "milab/autodiff.hpp"
#include "milab/rng.hpp"

namespace milab {

using Matrix = ad::Matrix;

// (xs[i], ys[i]) is a joint draw; (xs[i], ys[j]) for i != j is a
// product-of-marginals draw.
struct BatchPair {
  Matrix xs;
  Matrix ys;
  // Generating label of each row (cluster tasks only).
  std::vector<int> labels;
};

// X uniform over N classes (one-hot rows); the pair is (x, x). I(X, X) = ln N.
struct OneHotTask {
  int classes = 16;
  Rng rng;

  OneHotTask(int classes, std::uint64_t seed);
};

struct RhoStep {
  long until_iteration;  // exclusive upper bound; the last step extends forever
  double rho;
};

// X ~ N(0, I_d), Y | X ~ N(rho X, (1 - rho^2) I_d), rho piecewise constant in
// the training iteration. I(X, Y) = -(d/2) ln(1 - rho^2).
struct GaussianTask {
  int dim = 20;
  std::vector<RhoStep> schedule;
  Rng rng;

  GaussianTask(int dim, std::vector<RhoStep> schedule, std::uint64_t seed);
  double rho_at(long iteration) const;
};

enum class ClusterMode {
  kSupervised,   // (x, one-hot(y))
  kContrastive,  // (x1, x2) drawn independently from the same cluster
};

// K isotropic Gaussian clusters whose centers are pairwise at least
// `separation` apart with per-coordinate standard deviation sigma. With
// separation / sigma >= 20 each sample has a single label, so
// I = H(Y) in both modes.
struct ClusterTask {
  int labels = 10;
  int input_dim = 16;
  double separation = 1.0;
  double sigma = 0.05;
  ClusterMode mode = ClusterMode::kSupervised;
  std::vector<double> label_probs;  // uniform when constructed empty
  Matrix centers;                   // labels x input_dim
  Rng rng;

  ClusterTask(int labels, int input_dim, double separation_ratio, ClusterMode mode,
              std::uint64_t seed, std::vector<double> label_probs = {});

  // Fresh labelled inputs from the marginal of X (for accuracy evaluation).
  BatchPair sample_labelled(int n);
  int nearest_center(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

using Task = std::variant<OneHotTask, GaussianTask, ClusterTask>;

// Throws Error(kInvalidArgument) when n < 2.
BatchPair sample_joint(Task& task, int n, long iteration = 0);
double true_mi(const Task& task, long iteration = 0);

// Input widths (x, y) the task produces.
int x_width(const Task& task);
int y_width(const Task& task);

// rho = sqrt(1 - e^{-2 target / d}).
double rho_for_target_mi(int dim, double target_mi);
double gaussian_mi(int dim, double rho);

// Piecewise-constant rho: step k covers iterations [k * n, (k + 1) * n).
std::vector<RhoStep> staircase_schedule(int dim, const std::vector<double>& mi_steps,
                                        long iters_per_step);

}  // namespace milab
