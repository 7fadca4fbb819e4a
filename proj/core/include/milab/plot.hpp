#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "milab/trainer.hpp"

namespace milab {

// Column names of the run-log CSV that can be plotted.
const std::vector<std::string>& plot_columns();

// Throws Error(kInvalidArgument) listing the available columns when `column`
// is unknown.
double column_value(const RunRecord& record, std::string_view column);

struct PlotInput {
  std::string label;  // usually the CSV file stem
  std::vector<RunRecord> records;
  std::optional<RunSummary> summary;  // enables the reference lines
};

struct PlotOptions {
  std::vector<std::string> columns;
  std::optional<double> ema;  // light raw series plus a dark smoothed overlay
  std::string title;
  int width = 900;
  int height = 500;
};

// Line chart, one series per (input, column). With a summary, draws the true
// MI as a step line and, for InfoNCE runs, a dashed line at ln(batch).
// Non-finite values break the polyline.
std::string render_svg(const std::vector<PlotInput>& inputs, const PlotOptions& options);

}  // namespace milab
