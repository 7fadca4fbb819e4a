#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "milab/error.hpp"
#include "milab/trainer.hpp"

namespace milab {

namespace {

using Json = nlohmann::ordered_json;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, std::size_t line) {
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size()) {
    throw Error(ErrorCode::kParse,
                "csv line " + std::to_string(line) + ": not a number: '" + field + "'");
  }
  return v;
}

// JSON has no NaN; non-finite numbers are stored as null.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double num_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void write_csv(std::span<const RunRecord> records, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.iter << ',' << fmt(r.term1) << ',' << fmt(r.term2) << ',' << fmt(r.reg) << ','
        << fmt(r.train_loss) << ',' << fmt(r.mi_estimate) << ',' << fmt(r.diag_mean) << ','
        << fmt(r.diag_min) << ',' << fmt(r.diag_max) << ',' << fmt(r.offdiag_mean) << ','
        << fmt(r.offdiag_min) << ',' << fmt(r.offdiag_max) << ',' << (r.diverged ? 1 : 0) << '\n';
  }
}

std::vector<RunRecord> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw Error(ErrorCode::kParse, "csv line 1: header does not match the run-log schema");
  }
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 13) {
      throw Error(ErrorCode::kParse, "csv line " + std::to_string(lineno) + ": expected 13 fields, got " +
                                         std::to_string(f.size()));
    }
    RunRecord r;
    const double iter = parse_double(f[0], lineno);
    if (iter != std::floor(iter) || iter < 0) {
      throw Error(ErrorCode::kParse, "csv line " + std::to_string(lineno) + ": bad iteration");
    }
    r.iter = static_cast<long>(iter);
    double* fields[] = {&r.term1,        &r.term2,    &r.reg,      &r.train_loss,
                        &r.mi_estimate,  &r.diag_mean, &r.diag_min, &r.diag_max,
                        &r.offdiag_mean, &r.offdiag_min, &r.offdiag_max};
    for (std::size_t k = 0; k < 11; ++k) *fields[k] = parse_double(f[k + 1], lineno);
    if (f[12] != "0" && f[12] != "1") {
      throw Error(ErrorCode::kParse, "csv line " + std::to_string(lineno) + ": diverged must be 0 or 1");
    }
    r.diverged = f[12] == "1";
    if (!out.empty() && r.iter <= out.back().iter) {
      throw Error(ErrorCode::kParse,
                  "csv line " + std::to_string(lineno) + ": iterations must increase");
    }
    out.push_back(r);
  }
  return out;
}

void write_summary_json(const RunSummary& s, std::ostream& out) {
  Json j;
  j["name"] = s.name;
  j["estimator"] = s.estimator;
  j["regularized"] = s.regularized;
  j["lambda"] = s.lambda;
  j["seed"] = s.seed;
  j["batch"] = s.batch;
  j["iterations"] = s.iterations;
  j["converged_estimate"] = num(s.converged_estimate);
  j["true_mi"] = num(s.true_mi);
  j["divergence_iter"] = s.divergence_iter ? Json(*s.divergence_iter) : Json(nullptr);
  j["max_abs_score"] = num(s.max_abs_score);
  j["accuracy"] = s.accuracy ? num(*s.accuracy) : Json(nullptr);
  Json plateaus = Json::array();
  for (const auto& p : s.plateaus) {
    Json e;
    e["begin"] = p.begin;
    e["end"] = p.end;
    e["true_mi"] = num(p.true_mi);
    e["tail_mean"] = num(p.tail_mean);
    e["max_abs_score"] = num(p.max_abs_score);
    e["diverged"] = p.diverged;
    plateaus.push_back(e);
  }
  j["plateaus"] = plateaus;
  out << j.dump(2) << '\n';
}

RunSummary read_summary_json(std::istream& in) {
  try {
    const Json j = Json::parse(in);
    RunSummary s;
    s.name = j.at("name").get<std::string>();
    s.estimator = j.at("estimator").get<std::string>();
    s.regularized = j.at("regularized").get<bool>();
    s.lambda = j.at("lambda").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.batch = j.at("batch").get<int>();
    s.iterations = j.at("iterations").get<long>();
    s.converged_estimate = num_from(j.at("converged_estimate"));
    s.true_mi = num_from(j.at("true_mi"));
    if (!j.at("divergence_iter").is_null()) s.divergence_iter = j.at("divergence_iter").get<long>();
    s.max_abs_score = num_from(j.at("max_abs_score"));
    if (!j.at("accuracy").is_null()) s.accuracy = j.at("accuracy").get<double>();
    for (const auto& e : j.at("plateaus")) {
      PlateauSummary p;
      p.begin = e.at("begin").get<long>();
      p.end = e.at("end").get<long>();
      p.true_mi = num_from(e.at("true_mi"));
      p.tail_mean = num_from(e.at("tail_mean"));
      p.max_abs_score = num_from(e.at("max_abs_score"));
      p.diverged = e.at("diverged").get<bool>();
      s.plateaus.push_back(p);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("summary json: ") + e.what());
  }
}

}  // namespace milab
