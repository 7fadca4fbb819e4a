#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "milab/config.hpp"
#include "milab/trainer.hpp"

namespace milab {

// losses x {original, regularized x lambdas} x seeds, all sharing `base`.
struct SweepSpec {
  std::string name = "sweep";
  RunConfig base;
  std::vector<EstimatorKind> losses{EstimatorKind::kMine};
  std::vector<double> lambdas{0.1, 0.01, 0.001};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  bool original = true;
  bool regularized = true;
};

// Base sections as in a run config plus [sweep] with keys name, losses,
// lambdas, seeds, original, regularized.
SweepSpec sweep_spec_from(const ConfigDocument& doc);

struct SweepEntry {
  RunConfig config;
  bool regularized = false;
};

// Every expanded config is validated here, so a bad suite fails before any
// run starts.
std::vector<SweepEntry> expand_suite(const SweepSpec& spec);

// Runs every config on up to `jobs` threads. Results are indexed like the
// input, so output never depends on scheduling. `on_done` (optional) is
// called under a lock after each run.
std::vector<TrainResult> run_all(std::span<const RunConfig> configs, int jobs,
                                 const std::function<void(std::size_t, const RunLog&)>& on_done = {});

struct ReportRow {
  std::string loss;
  std::string variant;  // "original" or "regularized"
  double lambda = 0.0;  // best lambda for regularized rows
  double ideal_mi = 0.0;
  int runs = 0;
  int diverged = 0;
  double mi_mean = 0.0;
  std::optional<double> mi_half_width;  // unset with fewer than two runs
  std::optional<double> acc_mean;
  std::optional<double> acc_half_width;
};

// Half width of the two-sided 95% t-interval for the mean; unset for n < 2.
std::optional<double> ci_half_width(std::span<const double> values);

// Per-run MI values enter the report as max(0, estimate); a diverged run with
// no finite estimate counts as 0. Regularized rows keep the lambda whose mean
// is closest to the ideal MI (first listed lambda on ties).
std::vector<ReportRow> build_report(std::span<const SweepEntry> entries,
                                    std::span<const RunLog> logs);

void write_report_csv(std::span<const ReportRow> rows, std::ostream& out);
std::string report_text(std::span<const ReportRow> rows);

}  // namespace milab
