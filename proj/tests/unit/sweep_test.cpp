#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "milab/error.hpp"
#include "milab/sweep.hpp"

using milab::EstimatorKind;
using milab::ReportRow;
using milab::RunLog;
using milab::SweepEntry;
using milab::SweepSpec;

namespace {

// Two-sided 97.5% Student-t quantiles from standard tables.
constexpr double kT975Df1 = 12.706204736174707;
constexpr double kT975Df4 = 2.7764451051977987;

SweepSpec tiny_spec() {
  SweepSpec s;
  s.base.task.classes = 4;
  s.base.critic.hidden = {8};
  s.base.batch = 8;
  s.base.iterations = 40;
  s.losses = {EstimatorKind::kMine, EstimatorKind::kNwj};
  s.lambdas = {0.1, 0.01};
  s.seeds = {1, 2};
  return s;
}

SweepEntry entry(EstimatorKind kind, double lambda, std::uint64_t seed) {
  SweepEntry e;
  e.config.estimator.kind = kind;
  e.config.estimator.reg.lambda = lambda;
  e.config.seed = seed;
  e.regularized = lambda > 0.0;
  return e;
}

RunLog log_with(double estimate, double truth, bool diverged = false) {
  RunLog l;
  l.summary.converged_estimate = estimate;
  l.summary.true_mi = truth;
  if (diverged) l.summary.divergence_iter = 10;
  return l;
}

}  // namespace

TEST(CiHalfWidth, MatchesTheTTableOracle) {
  const std::vector<double> five{1.0, 2.0, 3.0, 4.0, 5.0};
  // sd = sqrt(2.5), so the half width is t * sqrt(2.5 / 5).
  EXPECT_NEAR(*milab::ci_half_width(five), kT975Df4 * std::sqrt(0.5), 1e-12);
  const std::vector<double> two{0.0, 2.0};
  EXPECT_NEAR(*milab::ci_half_width(two), kT975Df1 * std::sqrt(2.0) / std::sqrt(2.0), 1e-10);
  const std::vector<double> flat{3.0, 3.0, 3.0};
  EXPECT_EQ(*milab::ci_half_width(flat), 0.0);
  EXPECT_FALSE(milab::ci_half_width(std::vector<double>{1.0}).has_value());
  EXPECT_FALSE(milab::ci_half_width(std::vector<double>{}).has_value());
}

TEST(ExpandSuite, NamesAndOrder) {
  const auto entries = milab::expand_suite(tiny_spec());
  ASSERT_EQ(entries.size(), 12u);
  std::vector<std::string> names;
  for (const auto& e : entries) names.push_back(e.config.name);
  EXPECT_EQ(names[0], "mine-orig-s1");
  EXPECT_EQ(names[1], "mine-orig-s2");
  EXPECT_EQ(names[2], "mine-reg-l0.1-s1");
  EXPECT_EQ(names[5], "mine-reg-l0.01-s2");
  EXPECT_EQ(names[6], "nwj-orig-s1");
  EXPECT_EQ(entries[0].config.estimator.reg.lambda, 0.0);
  EXPECT_FALSE(entries[0].regularized);
  EXPECT_EQ(entries[4].config.estimator.reg.lambda, 0.01);
  EXPECT_TRUE(entries[4].regularized);
  EXPECT_EQ(entries[11].config.seed, 2u);
}

TEST(ExpandSuite, InvalidEntryFailsUpFront) {
  SweepSpec s = tiny_spec();
  s.losses = {EstimatorKind::kJs};
  try {
    milab::expand_suite(s);
    FAIL() << "expected a validation error";
  } catch (const milab::Error& e) {
    EXPECT_EQ(e.code(), milab::ErrorCode::kValidation);
    EXPECT_NE(std::string(e.what()).find("suite entry js-orig-s1"), std::string::npos);
  }
}

TEST(SweepSpecFrom, ParsesTheSweepSection) {
  const auto doc = milab::parse_config(
      "[sweep]\nname = \"s\"\nlosses = [\"smile\", \"tuba\"]\nlambdas = [0.5]\nseeds = [3]\n"
      "original = false\n[task]\nclasses = 4\n",
      "suite.toml");
  const SweepSpec s = milab::sweep_spec_from(doc);
  EXPECT_EQ(s.name, "s");
  EXPECT_EQ(s.losses, (std::vector<EstimatorKind>{EstimatorKind::kSmile, EstimatorKind::kTuba}));
  EXPECT_EQ(s.lambdas, std::vector<double>{0.5});
  EXPECT_EQ(s.seeds, std::vector<std::uint64_t>{3});
  EXPECT_FALSE(s.original);
  EXPECT_EQ(s.base.task.classes, 4);
}

TEST(SweepSpecFrom, Errors) {
  auto msg = [](const std::string& text) -> std::string {
    try {
      milab::sweep_spec_from(milab::parse_config(text, "suite.toml"));
    } catch (const milab::Error& e) {
      return e.what();
    }
    return "no error";
  };
  EXPECT_EQ(msg("[task]\nclasses = 4\n"), "suite.toml: a suite needs a [sweep] section");
  EXPECT_EQ(msg("[sweep]\nlosses = [1]\n"), "suite.toml:2: [sweep] losses: expected an array of strings");
  EXPECT_EQ(msg("[sweep]\nseeds = [1.5]\n"),
            "suite.toml:2: [sweep] seeds: seeds must be non-negative integers");
  EXPECT_EQ(msg("[sweep]\nlambdas = [-1]\n"), "suite.toml:2: [sweep] lambdas: lambdas must be non-negative");
  EXPECT_EQ(msg("[sweep]\nrepeat = 2\n"), "suite.toml:2: [sweep] repeat: unknown key");
  EXPECT_EQ(msg("[sweep]\noriginal = false\nregularized = false\n"),
            "suite.toml: [sweep] enables neither variant");
}

TEST(BuildReport, PicksTheLambdaClosestToTruth) {
  const double truth = std::log(16.0);
  const std::vector<SweepEntry> entries{
      entry(EstimatorKind::kMine, 0.0, 1),  entry(EstimatorKind::kMine, 0.0, 2),
      entry(EstimatorKind::kMine, 0.1, 1),  entry(EstimatorKind::kMine, 0.1, 2),
      entry(EstimatorKind::kMine, 0.01, 1), entry(EstimatorKind::kMine, 0.01, 2)};
  const std::vector<RunLog> logs{log_with(2.0, truth),        log_with(2.2, truth),
                                 log_with(2.7, truth),        log_with(2.8, truth),
                                 log_with(-0.5, truth, true), log_with(1.0, truth)};
  const auto rows = milab::build_report(entries, logs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].variant, "original");
  EXPECT_NEAR(rows[0].mi_mean, 2.1, 1e-12);
  EXPECT_NEAR(*rows[0].mi_half_width, kT975Df1 * std::sqrt(0.02) / std::sqrt(2.0), 1e-10);
  EXPECT_EQ(rows[1].variant, "regularized");
  EXPECT_EQ(rows[1].lambda, 0.1);
  EXPECT_NEAR(rows[1].mi_mean, 2.75, 1e-12);
  EXPECT_EQ(rows[1].diverged, 0);
  EXPECT_FALSE(rows[1].acc_mean.has_value());
}

TEST(BuildReport, NegativeAndMissingEstimatesCountAsZero) {
  const std::vector<SweepEntry> entries{entry(EstimatorKind::kNwj, 0.0, 1),
                                        entry(EstimatorKind::kNwj, 0.0, 2)};
  const std::vector<RunLog> logs{log_with(-1.0, 1.0),
                                 log_with(std::numeric_limits<double>::quiet_NaN(), 1.0, true)};
  const auto rows = milab::build_report(entries, logs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].mi_mean, 0.0);
  EXPECT_EQ(rows[0].diverged, 1);
  EXPECT_EQ(rows[0].runs, 2);
}

TEST(BuildReport, SingleRunHasNoInterval) {
  std::vector<RunLog> logs{log_with(1.5, 2.0)};
  logs[0].summary.accuracy = 0.97;
  const std::vector<SweepEntry> entries{entry(EstimatorKind::kInfoNce, 0.0, 1)};
  const auto rows = milab::build_report(entries, logs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].mi_half_width.has_value());
  EXPECT_EQ(*rows[0].acc_mean, 0.97);
  const std::string text = milab::report_text(rows);
  EXPECT_NE(text.find("1.5000 +- n/a"), std::string::npos) << text;
  EXPECT_NE(text.find("0/1"), std::string::npos);
  std::ostringstream csv;
  milab::write_report_csv(rows, csv);
  EXPECT_EQ(csv.str(),
            "loss,variant,lambda,ideal_mi,runs,diverged,mi_mean,mi_ci95,acc_mean,acc_ci95\n"
            "infonce,original,0,2,1,0,1.5,,0.96999999999999997,\n");
}

TEST(BuildReport, LengthMismatch) {
  const std::vector<SweepEntry> entries{entry(EstimatorKind::kMine, 0.0, 1)};
  EXPECT_THROW(milab::build_report(entries, std::vector<RunLog>{}), milab::Error);
}

TEST(RunAll, ResultsDoNotDependOnThreadCount) {
  SweepSpec s = tiny_spec();
  s.losses = {EstimatorKind::kMine};
  std::vector<milab::RunConfig> configs;
  for (const auto& e : milab::expand_suite(s)) configs.push_back(e.config);
  std::vector<std::size_t> seen;
  const auto serial = milab::run_all(configs, 1, [&](std::size_t i, const RunLog&) {
    seen.push_back(i);
  });
  const auto threaded = milab::run_all(configs, 3);
  ASSERT_EQ(serial.size(), configs.size());
  EXPECT_EQ(seen.size(), configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    std::ostringstream a, b;
    milab::write_csv(serial[i].log.records, a);
    milab::write_csv(threaded[i].log.records, b);
    EXPECT_EQ(a.str(), b.str()) << configs[i].name;
  }
  EXPECT_THROW(milab::run_all(configs, 0), milab::Error);
}
