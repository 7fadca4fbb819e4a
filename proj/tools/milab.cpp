// milab: run, sweep and plot mutual-information estimation experiments.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "milab/config.hpp"
#include "milab/error.hpp"
#include "milab/plot.hpp"
#include "milab/sweep.hpp"
#include "milab/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDiverged = 3;

fs::path default_out_dir() {
  if (const char* env = std::getenv("MI_LAB_OUT"); env != nullptr && *env != '\0') return env;
  return "out";
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw milab::Error(milab::ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw milab::Error(milab::ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

void write_run(const fs::path& dir, const milab::RunLog& log) {
  std::ostringstream csv;
  milab::write_csv(log.records, csv);
  write_file(dir / (log.summary.name + ".csv"), csv.str());
  std::ostringstream json;
  milab::write_summary_json(log.summary, json);
  write_file(dir / (log.summary.name + ".json"), json.str());
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const fs::path& out_dir) {
  milab::RunConfig cfg = milab::run_config_from(milab::load_config_file(config_path));
  if (seed) cfg.seed = *seed;
  if (cfg.name == "run") cfg.name = fs::path(config_path).stem().string();
  const milab::TrainResult result = milab::train(cfg);
  write_run(out_dir, result.log);
  const auto& s = result.log.summary;
  std::cout << s.name << ": estimate " << s.converged_estimate << " nats, true MI " << s.true_mi;
  if (s.accuracy) std::cout << ", accuracy " << *s.accuracy;
  std::cout << '\n';
  std::cout << "wrote " << (out_dir / (s.name + ".csv")).string() << " and "
            << (out_dir / (s.name + ".json")).string() << '\n';
  if (s.divergence_iter) {
    std::cerr << "run diverged at iteration " << *s.divergence_iter << '\n';
    return kExitDiverged;
  }
  return kExitOk;
}

int cmd_sweep(const std::string& suite_path, int jobs, const fs::path& out_root) {
  const milab::SweepSpec spec = milab::sweep_spec_from(milab::load_config_file(suite_path));
  const std::vector<milab::SweepEntry> entries = milab::expand_suite(spec);
  std::vector<milab::RunConfig> configs;
  for (const auto& e : entries) configs.push_back(e.config);

  const fs::path dir = out_root / spec.name;
  std::cerr << "running " << configs.size() << " configs on " << jobs << " thread(s)\n";
  std::size_t done = 0;
  const auto results = milab::run_all(configs, jobs, [&](std::size_t i, const milab::RunLog& log) {
    ++done;
    std::cerr << "[" << done << "/" << configs.size() << "] " << configs[i].name
              << (log.summary.divergence_iter ? " (diverged)" : "") << '\n';
  });

  std::vector<milab::RunLog> logs;
  for (const auto& r : results) {
    write_run(dir / "runs", r.log);
    logs.push_back(r.log);
  }
  const auto rows = milab::build_report(entries, logs);
  std::ostringstream csv;
  milab::write_report_csv(rows, csv);
  write_file(dir / "report.csv", csv.str());
  const std::string text = milab::report_text(rows);
  write_file(dir / "report.txt", text);
  std::cout << text;
  std::cout << "wrote " << (dir / "report.csv").string() << '\n';
  return kExitOk;
}

int cmd_plot(const std::vector<std::string>& csvs, const std::string& cols,
             std::optional<double> ema, const std::string& out_file) {
  milab::PlotOptions opt;
  std::stringstream ss(cols);
  for (std::string c; std::getline(ss, c, ',');) {
    if (!c.empty()) opt.columns.push_back(c);
  }
  opt.ema = ema;
  std::vector<milab::PlotInput> inputs;
  for (const auto& path : csvs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw milab::Error(milab::ErrorCode::kIo, "cannot open '" + path + "'");
    milab::PlotInput pi;
    pi.label = fs::path(path).stem().string();
    try {
      pi.records = milab::read_csv(in);
    } catch (const milab::Error& e) {
      throw milab::Error(e.code(), path + ": " + e.what());
    }
    fs::path summary = fs::path(path).replace_extension(".json");
    if (fs::exists(summary)) {
      std::ifstream js(summary, std::ios::binary);
      pi.summary = milab::read_summary_json(js);
    }
    inputs.push_back(std::move(pi));
  }
  if (inputs.size() == 1) opt.title = inputs.front().label;
  fs::path out = out_file.empty() ? default_out_dir() / "plot.svg" : fs::path(out_file);
  write_file(out, milab::render_svg(inputs, opt));
  std::cout << "wrote " << out.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and compare variational mutual-information estimators"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_out;
  auto* run = app.add_subcommand("run", "Train one configuration and write its CSV log and JSON summary");
  run->add_option("config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the configured seed");
  run->add_option("--out", run_out, "Output directory (default: $MI_LAB_OUT or ./out)");

  std::string suite_path;
  int jobs = 1;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Run a loss x lambda x seed suite and write a report");
  sweep->add_option("suite", suite_path, "Suite file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_out, "Output directory (default: $MI_LAB_OUT or ./out)");

  std::vector<std::string> csvs;
  std::string cols = "mi_estimate";
  std::optional<double> ema;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Render run-log columns as an SVG line chart");
  plot->add_option("csv", csvs, "Run-log CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--cols", cols, "Comma-separated column names");
  plot->add_option("--ema", ema, "Overlay an exponential moving average with this alpha");
  plot->add_option("--out", plot_out, "SVG file (default: $MI_LAB_OUT/plot.svg or ./out/plot.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*run) return cmd_run(config_path, seed, run_out.empty() ? default_out_dir() : fs::path(run_out));
    if (*sweep) return cmd_sweep(suite_path, jobs, sweep_out.empty() ? default_out_dir() : fs::path(sweep_out));
    if (*plot) return cmd_plot(csvs, cols, ema, plot_out);
  } catch (const milab::Error& e) {
    std::cerr << "error (" << milab::to_string(e.code()) << "): " << e.what() << '\n';
    const auto c = e.code();
    const bool user_error = c == milab::ErrorCode::kValidation || c == milab::ErrorCode::kParse ||
                            c == milab::ErrorCode::kInvalidArgument;
    return user_error ? kExitValidation : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
