#include "milab/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "milab/error.hpp"

namespace milab {

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  if (std::isnan(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string lambda_tag(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", lambda);
  return buf;
}

}  // namespace

SweepSpec sweep_spec_from(const ConfigDocument& doc) {
  SweepSpec spec;
  spec.base = run_config_from(doc, {"sweep"});
  spec.losses = {spec.base.estimator.kind};
  auto it = doc.sections.find("sweep");
  if (it == doc.sections.end()) {
    throw Error(ErrorCode::kValidation, doc.source + ": a suite needs a [sweep] section");
  }
  const ConfigSection& s = it->second;
  auto fail = [&](const std::string& key, const std::string& what) {
    throw Error(ErrorCode::kValidation, doc.source + ":" + std::to_string(s.entries.at(key).line) +
                                            ": [sweep] " + key + ": " + what);
  };
  for (const auto& [key, value] : s.entries) {
    const auto& d = value.data;
    if (key == "name") {
      if (!std::holds_alternative<std::string>(d)) fail(key, "expected a string");
      spec.name = std::get<std::string>(d);
    } else if (key == "losses") {
      if (!std::holds_alternative<std::vector<std::string>>(d)) fail(key, "expected an array of strings");
      spec.losses.clear();
      for (const auto& name : std::get<std::vector<std::string>>(d)) {
        try {
          spec.losses.push_back(estimator_from_string(name));
        } catch (const Error& e) {
          fail(key, e.what());
        }
      }
      if (spec.losses.empty()) fail(key, "at least one loss is required");
    } else if (key == "lambdas") {
      if (!std::holds_alternative<std::vector<double>>(d)) fail(key, "expected an array of numbers");
      spec.lambdas = std::get<std::vector<double>>(d);
      for (double l : spec.lambdas) {
        if (!(l >= 0.0)) fail(key, "lambdas must be non-negative");
      }
    } else if (key == "seeds") {
      if (!std::holds_alternative<std::vector<double>>(d)) fail(key, "expected an array of integers");
      spec.seeds.clear();
      for (double v : std::get<std::vector<double>>(d)) {
        if (v < 0 || v != std::floor(v)) fail(key, "seeds must be non-negative integers");
        spec.seeds.push_back(static_cast<std::uint64_t>(v));
      }
      if (spec.seeds.empty()) fail(key, "at least one seed is required");
    } else if (key == "original" || key == "regularized") {
      if (!std::holds_alternative<bool>(d)) fail(key, "expected true or false");
      (key == "original" ? spec.original : spec.regularized) = std::get<bool>(d);
    } else {
      fail(key, "unknown key");
    }
  }
  if (!spec.original && !spec.regularized) {
    throw Error(ErrorCode::kValidation, doc.source + ": [sweep] enables neither variant");
  }
  if (spec.regularized && spec.lambdas.empty()) {
    throw Error(ErrorCode::kValidation, doc.source + ": [sweep] lambdas is empty");
  }
  return spec;
}

std::vector<SweepEntry> expand_suite(const SweepSpec& spec) {
  std::vector<SweepEntry> out;
  for (EstimatorKind loss : spec.losses) {
    const std::string lname(to_string(loss));
    auto add = [&](bool reg, double lambda, std::uint64_t seed) {
      RunConfig c = spec.base;
      c.estimator.kind = loss;
      c.estimator.reg.lambda = reg ? lambda : 0.0;
      if (!is_dv_family(loss)) c.estimator.reg.target = 0.0;
      c.seed = seed;
      c.name = lname + (reg ? "-reg-l" + lambda_tag(lambda) : "-orig") + "-s" + std::to_string(seed);
      try {
        c.validate();
      } catch (const Error& e) {
        throw Error(ErrorCode::kValidation, "suite entry " + c.name + ": " + e.what());
      }
      out.push_back({std::move(c), reg});
    };
    if (spec.original) {
      for (auto seed : spec.seeds) add(false, 0.0, seed);
    }
    if (spec.regularized) {
      for (double lambda : spec.lambdas) {
        for (auto seed : spec.seeds) add(true, lambda, seed);
      }
    }
  }
  return out;
}

std::vector<TrainResult> run_all(std::span<const RunConfig> configs, int jobs,
                                 const std::function<void(std::size_t, const RunLog&)>& on_done) {
  if (jobs < 1) throw Error(ErrorCode::kInvalidArgument, "run_all: jobs must be positive");
  std::vector<std::optional<TrainResult>> slots(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        slots[i].emplace(train(configs[i]));
        if (on_done) {
          std::lock_guard lock(done_mutex);
          on_done(i, slots[i]->log);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(jobs);
  if (n == 1 || configs.size() <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(n, configs.size()); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<TrainResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::optional<double> ci_half_width(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return std::nullopt;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  return t * sd / std::sqrt(static_cast<double>(n));
}

namespace {

struct Group {
  std::string loss;
  bool regularized = false;
  double lambda = 0.0;
  std::vector<double> mi;
  std::vector<double> acc;
  double ideal = 0.0;
  int diverged = 0;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

ReportRow row_of(const Group& g) {
  ReportRow r;
  r.loss = g.loss;
  r.variant = g.regularized ? "regularized" : "original";
  r.lambda = g.lambda;
  r.ideal_mi = g.ideal;
  r.runs = static_cast<int>(g.mi.size());
  r.diverged = g.diverged;
  r.mi_mean = mean_of(g.mi);
  r.mi_half_width = ci_half_width(g.mi);
  if (!g.acc.empty()) {
    r.acc_mean = mean_of(g.acc);
    r.acc_half_width = ci_half_width(g.acc);
  }
  return r;
}

}  // namespace

std::vector<ReportRow> build_report(std::span<const SweepEntry> entries,
                                    std::span<const RunLog> logs) {
  if (entries.size() != logs.size()) {
    throw Error(ErrorCode::kInvalidArgument, "build_report: entries and logs differ in length");
  }
  // Groups keyed by (loss, variant, lambda) in first-seen order.
  std::vector<Group> groups;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const RunConfig& c = entries[i].config;
    const std::string loss(to_string(c.estimator.kind));
    const double lambda = c.estimator.reg.lambda;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.loss == loss && g.regularized == entries[i].regularized && g.lambda == lambda;
    });
    if (it == groups.end()) {
      groups.push_back({loss, entries[i].regularized, lambda, {}, {}, logs[i].summary.true_mi, 0});
      it = groups.end() - 1;
    }
    const RunSummary& s = logs[i].summary;
    const double est = s.converged_estimate;
    it->mi.push_back(std::isnan(est) ? 0.0 : std::max(0.0, est));
    if (s.accuracy) it->acc.push_back(*s.accuracy);
    if (s.divergence_iter) ++it->diverged;
  }

  std::vector<ReportRow> rows;
  std::vector<std::string> losses;
  for (const auto& g : groups) {
    if (std::find(losses.begin(), losses.end(), g.loss) == losses.end()) losses.push_back(g.loss);
  }
  for (const auto& loss : losses) {
    for (const auto& g : groups) {
      if (g.loss == loss && !g.regularized) rows.push_back(row_of(g));
    }
    const Group* best = nullptr;
    for (const auto& g : groups) {
      if (g.loss != loss || !g.regularized) continue;
      if (best == nullptr ||
          std::abs(mean_of(g.mi) - g.ideal) < std::abs(mean_of(best->mi) - best->ideal)) {
        best = &g;
      }
    }
    if (best != nullptr) rows.push_back(row_of(*best));
  }
  return rows;
}

void write_report_csv(std::span<const ReportRow> rows, std::ostream& out) {
  out << "loss,variant,lambda,ideal_mi,runs,diverged,mi_mean,mi_ci95,acc_mean,acc_ci95\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& r : rows) {
    out << r.loss << ',' << r.variant << ',' << fmt(r.lambda) << ',' << fmt(r.ideal_mi) << ','
        << r.runs << ',' << r.diverged << ',' << fmt(r.mi_mean) << ',' << opt(r.mi_half_width)
        << ',' << opt(r.acc_mean) << ',' << opt(r.acc_half_width) << '\n';
  }
}

std::string report_text(std::span<const ReportRow> rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-12s %-8s %-9s %-20s %-20s %s\n", "loss", "variant",
                "lambda", "ideal", "MI (95% CI)", "accuracy (95% CI)", "diverged");
  os << line;
  auto pm = [](double mean, const std::optional<double>& hw) {
    return fmt(mean, "%.4f") + " +- " + (hw ? fmt(*hw, "%.4f") : std::string("n/a"));
  };
  for (const auto& r : rows) {
    const std::string lambda = r.variant == "original" ? "-" : lambda_tag(r.lambda);
    const std::string acc = r.acc_mean ? pm(*r.acc_mean, r.acc_half_width) : "-";
    std::snprintf(line, sizeof line, "%-8s %-12s %-8s %-9s %-20s %-20s %d/%d\n", r.loss.c_str(),
                  r.variant.c_str(), lambda.c_str(), fmt(r.ideal_mi, "%.4f").c_str(),
                  pm(r.mi_mean, r.mi_half_width).c_str(), acc.c_str(), r.diverged, r.runs);
    os << line;
  }
  return os.str();
}

}  // namespace milab
