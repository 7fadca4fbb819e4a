#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "milab/critic.hpp"
#include "milab/datasets.hpp"
#include "milab/estimators.hpp"
#include "milab/optimizer.hpp"

namespace milab {

struct TaskSpec {
  enum class Kind { kOneHot, kGaussian, kCluster };
  Kind kind = Kind::kOneHot;
  // one-hot
  int classes = 16;
  // gaussian
  int dim = 20;
  std::vector<double> mi_steps{2.0, 4.0, 6.0, 8.0, 10.0};
  long iters_per_step = 4000;
  // cluster
  int labels = 10;
  int input_dim = 16;
  double separation_ratio = 20.0;
  ClusterMode mode = ClusterMode::kSupervised;
  std::vector<double> label_probs;
};

std::string_view to_string(TaskSpec::Kind kind);

Task make_task(const TaskSpec& spec, std::uint64_t seed);

struct CriticConfig {
  CriticKind kind = CriticKind::kConcat;
  std::vector<int> hidden{256, 256};
  // Embedding width of separable critics. One-hot-label critics always emit
  // one logit per label.
  int embed_dim = 32;
  OutputActivation output = OutputActivation::kNone;
};

std::string_view to_string(CriticKind kind);
CriticKind critic_kind_from_string(std::string_view name);

// Layer widths implied by the task and critic choice.
MlpSpec critic_spec_for(const TaskSpec& task, const CriticConfig& critic, std::uint64_t seed);

struct DriftThresholds {
  // Per 1000 iterations. Both terms must move faster than `drift` while
  // their difference moves slower than `stable`.
  double drift = 0.025;
  double stable = 0.025;
};

struct RunConfig {
  std::string name = "run";
  TaskSpec task;
  CriticConfig critic;
  EstimatorSpec estimator;
  OptimizerSpec optimizer;
  int batch = 100;
  long iterations = 3000;
  std::uint64_t seed = 1;
  // 0 = automatic: every iteration up to 5000 iterations, else every 10.
  long log_every = 0;
  // Constant added to every concat-critic score from initialization on.
  double output_offset = 0.0;
  // Cluster tasks: fresh test draws for evaluate_accuracy (0 disables).
  int eval_n = 0;
  int train_pool = 1000;
  long drift_window = 1000;  // iterations
  DriftThresholds drift;

  // Throws Error(kValidation) naming the offending combination.
  void validate() const;
  long effective_log_every() const;
};

struct RunRecord {
  long iter = 0;
  double term1 = 0.0;
  double term2 = 0.0;
  double reg = 0.0;
  double train_loss = 0.0;
  double mi_estimate = 0.0;
  double diag_mean = 0.0;
  double diag_min = 0.0;
  double diag_max = 0.0;
  double offdiag_mean = 0.0;
  double offdiag_min = 0.0;
  double offdiag_max = 0.0;
  bool diverged = false;
};

struct PlateauSummary {
  long begin = 0;  // first iteration
  long end = 0;    // one past the last iteration
  double true_mi = 0.0;
  double tail_mean = 0.0;  // mean estimate over the final 10% of the plateau's records
  double max_abs_score = 0.0;
  bool diverged = false;
};

struct RunSummary {
  std::string name;
  std::string estimator;
  bool regularized = false;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  int batch = 0;
  long iterations = 0;
  double converged_estimate = 0.0;  // NaN when the tail holds no finite estimate
  double true_mi = 0.0;             // at the final iteration
  std::optional<long> divergence_iter;
  double max_abs_score = 0.0;  // over all computed iterations
  std::optional<double> accuracy;
  std::vector<PlateauSummary> plateaus;
};

struct RunLog {
  std::vector<RunRecord> records;
  RunSummary summary;
};

struct TrainResult {
  RunLog log;
  Critic critic;
};

// Sampling, scoring, loss and update per iteration; records are taken before
// the update. A divergence event (any |score| > 700, non-finite loss or
// gradient) is recorded with its computed values; afterwards no update happens
// and logged records carry NaN values with diverged = 1.
TrainResult train(const RunConfig& config);

// ---- diagnostics -----------------------------------------------------------

struct DriftMetric {
  double slope_term1 = 0.0;  // per 1000 iterations
  double slope_term2 = 0.0;
  double slope_diff = 0.0;
  bool drifting = false;
};

// Least-squares slopes over the trailing `window` records. Throws
// Error(kInvalidArgument) when window < 10 or window exceeds the log.
DriftMetric drift_metric(std::span<const RunRecord> records, std::size_t window,
                         const DriftThresholds& thresholds = {});

// Trailing records covering the last `iterations` iterations.
std::size_t records_in_last(std::span<const RunRecord> records, long iterations);

// y_0 = x_0, y_t = alpha x_t + (1 - alpha) y_{t-1}. A NaN input yields NaN and
// restarts the recursion at the next finite value.
std::vector<double> ema_smooth(std::span<const double> series, double alpha);

// Mean of the finite values among the last ceil(10%) entries.
double tail_mean(std::span<const double> values, double fraction = 0.1);

// Maps a batch of inputs to the embedding (separable critic) or to one logit
// per label (one-hot-label critic).
using EmbedFn = std::function<Matrix(const Matrix&)>;

// Supervised mode: predicted label = argmax of the logit row. Contrastive
// mode: label of the training-pool sample with the largest embedding dot
// product. Ties go to the lowest index. Draws the pool, then the test set,
// from the task's generator.
double evaluate_accuracy(const EmbedFn& embed, ClusterTask& task, int test_n,
                         int train_pool = 1000);
double evaluate_accuracy(const Critic& critic, ClusterTask& task, int test_n,
                         int train_pool = 1000);

// ---- serialization ---------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "iter,term1,term2,reg,train_loss,mi_estimate,diag_mean,diag_min,diag_max,offdiag_mean,"
    "offdiag_min,offdiag_max,diverged";

void write_csv(std::span<const RunRecord> records, std::ostream& out);
// Throws Error(kParse) with the line number on malformed input.
std::vector<RunRecord> read_csv(std::istream& in);

void write_summary_json(const RunSummary& summary, std::ostream& out);
RunSummary read_summary_json(std::istream& in);

}  // namespace milab
