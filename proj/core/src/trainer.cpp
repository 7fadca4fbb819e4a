#include "milab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "milab/error.hpp"
#include "milab/rng.hpp"

namespace milab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void reject(const std::string& msg) { throw Error(ErrorCode::kValidation, msg); }

// Pairwise activations are tens of megabytes per iteration. glibc serves
// blocks that large with fresh mmaps, so each iteration would pay for page
// faults; keeping them on the heap more than halves the step time.
void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

}  // namespace

std::string_view to_string(TaskSpec::Kind kind) {
  switch (kind) {
    case TaskSpec::Kind::kOneHot: return "onehot";
    case TaskSpec::Kind::kGaussian: return "gaussian";
    case TaskSpec::Kind::kCluster: return "cluster";
  }
  return "onehot";
}

std::string_view to_string(CriticKind kind) {
  switch (kind) {
    case CriticKind::kConcat: return "concat";
    case CriticKind::kSeparable: return "separable";
    case CriticKind::kOneHotLabel: return "onehot_label";
  }
  return "concat";
}

CriticKind critic_kind_from_string(std::string_view name) {
  if (name == "concat") return CriticKind::kConcat;
  if (name == "separable") return CriticKind::kSeparable;
  if (name == "onehot_label") return CriticKind::kOneHotLabel;
  reject("unknown critic kind '" + std::string(name) +
         "' (expected concat, separable or onehot_label)");
}

Task make_task(const TaskSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case TaskSpec::Kind::kOneHot:
      return OneHotTask(spec.classes, seed);
    case TaskSpec::Kind::kGaussian:
      return GaussianTask(spec.dim, staircase_schedule(spec.dim, spec.mi_steps, spec.iters_per_step),
                          seed);
    case TaskSpec::Kind::kCluster:
      return ClusterTask(spec.labels, spec.input_dim, spec.separation_ratio, spec.mode, seed,
                         spec.label_probs);
  }
  reject("unknown task kind");
}

MlpSpec critic_spec_for(const TaskSpec& task, const CriticConfig& critic, std::uint64_t seed) {
  int xw = 0;
  int yw = 0;
  switch (task.kind) {
    case TaskSpec::Kind::kOneHot:
      xw = yw = task.classes;
      break;
    case TaskSpec::Kind::kGaussian:
      xw = yw = task.dim;
      break;
    case TaskSpec::Kind::kCluster:
      xw = task.input_dim;
      yw = task.mode == ClusterMode::kSupervised ? task.labels : task.input_dim;
      break;
  }
  MlpSpec spec;
  spec.seed = seed;
  spec.output = critic.output;
  switch (critic.kind) {
    case CriticKind::kConcat:
      spec.widths.push_back(xw + yw);
      spec.x_dim = xw;
      break;
    case CriticKind::kSeparable:
    case CriticKind::kOneHotLabel:
      spec.widths.push_back(xw);
      break;
  }
  spec.widths.insert(spec.widths.end(), critic.hidden.begin(), critic.hidden.end());
  switch (critic.kind) {
    case CriticKind::kConcat: spec.widths.push_back(1); break;
    case CriticKind::kSeparable: spec.widths.push_back(critic.embed_dim); break;
    case CriticKind::kOneHotLabel: spec.widths.push_back(yw); break;
  }
  return spec;
}

void RunConfig::validate() const {
  if (batch < 2) reject("run.batch must be at least 2");
  if (iterations < 1) reject("run.iterations must be positive");
  if (log_every < 0) reject("run.log_every must be non-negative");
  if (eval_n < 0) reject("run.eval_n must be non-negative");
  if (train_pool < 1) reject("run.train_pool must be positive");
  if (drift_window < 1) reject("drift.window must be positive");
  if (!(drift.drift > 0.0) || !(drift.stable > 0.0)) reject("drift thresholds must be positive");
  if (!std::isfinite(output_offset)) reject("run.output_offset must be finite");
  estimator.validate();
  optimizer.validate();

  for (int h : critic.hidden) {
    if (h < 1) reject("critic.hidden widths must be positive");
  }
  if (critic.embed_dim < 1) reject("critic.embed_dim must be positive");

  switch (task.kind) {
    case TaskSpec::Kind::kOneHot:
      if (task.classes < 2) reject("task.classes must be at least 2");
      if (critic.kind != CriticKind::kConcat) reject("the one-hot task needs a concat critic");
      break;
    case TaskSpec::Kind::kGaussian:
      if (task.dim < 1) reject("task.dim must be positive");
      if (task.mi_steps.empty()) reject("task.mi_steps must not be empty");
      if (task.iters_per_step < 1) reject("task.iters_per_step must be positive");
      for (std::size_t k = 0; k < task.mi_steps.size(); ++k) {
        if (!(task.mi_steps[k] >= 0.0)) reject("task.mi_steps must be non-negative");
        if (k > 0 && task.mi_steps[k] < task.mi_steps[k - 1]) {
          reject("task.mi_steps must be non-decreasing");
        }
      }
      if (critic.kind == CriticKind::kOneHotLabel) {
        reject("onehot_label critics need a supervised cluster task");
      }
      break;
    case TaskSpec::Kind::kCluster:
      if (task.labels < 2) reject("task.labels must be at least 2");
      if (task.input_dim < 1) reject("task.input_dim must be positive");
      if (!(task.separation_ratio > 0.0)) reject("task.separation_ratio must be positive");
      if (critic.kind == CriticKind::kOneHotLabel && task.mode != ClusterMode::kSupervised) {
        reject("onehot_label critics need task.mode = \"slb\"");
      }
      if (critic.kind == CriticKind::kSeparable && task.mode != ClusterMode::kContrastive) {
        reject("separable critics need task.mode = \"clb\"");
      }
      if (eval_n > 0 && critic.kind == CriticKind::kConcat) {
        reject("accuracy evaluation needs a separable or onehot_label critic");
      }
      break;
  }
  if (output_offset != 0.0 && critic.kind != CriticKind::kConcat) {
    reject("run.output_offset applies to concat critics only");
  }
  if (estimator.kind == EstimatorKind::kJs && critic.output != OutputActivation::kSoftplus) {
    reject("estimator \"js\" requires critic.output = \"softplus\" (got \"" +
           std::string(to_string(critic.output)) + "\")");
  }
}

long RunConfig::effective_log_every() const {
  if (log_every > 0) return log_every;
  return iterations <= 5000 ? 1 : 10;
}

namespace {

void fill_score_stats(RunRecord& r, const Matrix& s) {
  const Eigen::Index n = s.rows();
  double dsum = 0.0;
  double dmin = INFINITY;
  double dmax = -INFINITY;
  double osum = 0.0;
  double omin = INFINITY;
  double omax = -INFINITY;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = s(i, j);
      if (i == j) {
        dsum += v;
        dmin = std::min(dmin, v);
        dmax = std::max(dmax, v);
      } else {
        osum += v;
        omin = std::min(omin, v);
        omax = std::max(omax, v);
      }
    }
  }
  r.diag_mean = dsum / static_cast<double>(n);
  r.diag_min = dmin;
  r.diag_max = dmax;
  r.offdiag_mean = osum / static_cast<double>(n * (n - 1));
  r.offdiag_min = omin;
  r.offdiag_max = omax;
}

RunRecord nan_record(long iter) {
  RunRecord r;
  r.iter = iter;
  r.term1 = r.term2 = r.reg = r.train_loss = r.mi_estimate = kNaN;
  r.diag_mean = r.diag_min = r.diag_max = kNaN;
  r.offdiag_mean = r.offdiag_min = r.offdiag_max = kNaN;
  r.diverged = true;
  return r;
}

bool all_finite(const std::vector<Matrix>& ms) {
  for (const auto& m : ms) {
    if (!m.allFinite()) return false;
  }
  return true;
}

std::vector<PlateauSummary> plateaus_for(const RunConfig& cfg, const Task& task) {
  std::vector<PlateauSummary> out;
  if (cfg.task.kind == TaskSpec::Kind::kGaussian) {
    const long step = cfg.task.iters_per_step;
    for (long begin = 0; begin < cfg.iterations; begin += step) {
      PlateauSummary p;
      p.begin = begin;
      p.end = std::min(cfg.iterations, begin + step);
      // Iterations past the schedule stay on the final step.
      if (begin / step + 1 >= static_cast<long>(cfg.task.mi_steps.size())) {
        p.end = cfg.iterations;
      }
      p.true_mi = true_mi(task, begin);
      out.push_back(p);
      if (p.end == cfg.iterations) break;
    }
  } else {
    out.push_back({0, cfg.iterations, true_mi(task, 0), 0.0, 0.0, false});
  }
  return out;
}

}  // namespace

TrainResult train(const RunConfig& cfg) {
  cfg.validate();
  keep_large_blocks_on_heap();
  Task task = make_task(cfg.task, mix_seed(cfg.seed, static_cast<std::uint64_t>(SeedStream::kTask)));
  Critic critic = Critic::build(critic_spec_for(cfg.task, cfg.critic, cfg.seed), cfg.critic.kind);
  if (cfg.output_offset != 0.0) critic.shift_output(cfg.output_offset);
  Optimizer optimizer(cfg.optimizer);

  const long every = cfg.effective_log_every();
  std::vector<PlateauSummary> plateaus = plateaus_for(cfg, task);
  std::vector<std::vector<double>> plateau_estimates(plateaus.size());
  auto plateau_of = [&](long it) {
    std::size_t k = 0;
    while (k + 1 < plateaus.size() && it >= plateaus[k].end) ++k;
    return k;
  };

  RunLog log;
  RunSummary& sum = log.summary;
  sum.name = cfg.name;
  sum.estimator = std::string(to_string(cfg.estimator.kind));
  sum.regularized = cfg.estimator.reg.active();
  sum.lambda = cfg.estimator.reg.lambda;
  sum.seed = cfg.seed;
  sum.batch = cfg.batch;
  sum.iterations = cfg.iterations;
  sum.true_mi = true_mi(task, cfg.iterations - 1);

  bool diverged = false;
  std::vector<Matrix> values = critic.parameter_values();
  std::vector<Matrix> grads(values.size());

  for (long it = 0; it < cfg.iterations; ++it) {
    const bool logged = it % every == 0 || it + 1 == cfg.iterations;
    if (diverged) {
      if (logged) log.records.push_back(nan_record(it));
      continue;
    }

    BatchPair batch = sample_joint(task, cfg.batch, it);
    ad::Tape tape;
    Critic::Graph g = critic.forward(tape, batch.xs, batch.ys);
    const Matrix& scores = g.scores.value();
    const std::size_t pk = plateau_of(it);

    RunRecord rec;
    rec.iter = it;
    fill_score_stats(rec, scores);
    const double max_abs = std::max(std::abs(rec.diag_min), std::max(std::abs(rec.diag_max),
                           std::max(std::abs(rec.offdiag_min), std::abs(rec.offdiag_max))));
    if (!std::isnan(max_abs)) {
      sum.max_abs_score = std::max(sum.max_abs_score, max_abs);
      plateaus[pk].max_abs_score = std::max(plateaus[pk].max_abs_score, max_abs);
    }

    bool event = scores_diverged(scores);
    if (!event) {
      LossGraph loss = build_loss(g.scores, cfg.estimator);
      rec.term1 = loss.breakdown.term1;
      rec.term2 = loss.breakdown.term2;
      rec.reg = loss.breakdown.regularizer;
      rec.train_loss = loss.breakdown.training_loss;
      rec.mi_estimate = loss.breakdown.mi_estimate;
      if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.mi_estimate)) {
        event = true;
      } else {
        tape.backward(loss.objective);
        for (std::size_t k = 0; k < grads.size(); ++k) grads[k] = g.params[k].grad();
        if (!all_finite(grads) || !optimizer.step(values, grads)) {
          event = true;
        } else {
          auto& params = critic.parameters();
          for (std::size_t k = 0; k < params.size(); ++k) params[k].value = values[k];
        }
      }
    } else {
      rec.term1 = rec.term2 = rec.reg = rec.train_loss = rec.mi_estimate = kNaN;
    }

    if (event) {
      diverged = true;
      rec.diverged = true;
      sum.divergence_iter = it;
      plateaus[pk].diverged = true;
      log.records.push_back(rec);
      continue;
    }
    if (logged) {
      log.records.push_back(rec);
      plateau_estimates[pk].push_back(rec.mi_estimate);
    }
  }

  std::vector<double> estimates;
  estimates.reserve(log.records.size());
  for (const auto& r : log.records) estimates.push_back(r.mi_estimate);
  sum.converged_estimate = tail_mean(estimates);
  for (std::size_t k = 0; k < plateaus.size(); ++k) {
    plateaus[k].tail_mean =
        plateau_estimates[k].empty() ? kNaN : tail_mean(plateau_estimates[k]);
  }
  sum.plateaus = std::move(plateaus);

  if (cfg.eval_n > 0 && !diverged) {
    if (auto* cluster = std::get_if<ClusterTask>(&task)) {
      // Evaluation draws come from their own stream so they never depend on
      // how many training batches were sampled.
      cluster->rng = make_rng(cfg.seed, SeedStream::kEvaluation);
      sum.accuracy = evaluate_accuracy(critic, *cluster, cfg.eval_n, cfg.train_pool);
    }
  }
  return {std::move(log), std::move(critic)};
}

}  // namespace milab
