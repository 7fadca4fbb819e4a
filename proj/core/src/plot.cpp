#include "milab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "milab/error.hpp"

namespace milab {

const std::vector<std::string>& plot_columns() {
  static const std::vector<std::string> cols = {
      "term1",     "term2",    "reg",          "train_loss",  "mi_estimate", "diag_mean", "diag_min",
      "diag_max",  "offdiag_mean", "offdiag_min", "offdiag_max", "diverged"};
  return cols;
}

double column_value(const RunRecord& r, std::string_view c) {
  if (c == "term1") return r.term1;
  if (c == "term2") return r.term2;
  if (c == "reg") return r.reg;
  if (c == "train_loss") return r.train_loss;
  if (c == "mi_estimate") return r.mi_estimate;
  if (c == "diag_mean") return r.diag_mean;
  if (c == "diag_min") return r.diag_min;
  if (c == "diag_max") return r.diag_max;
  if (c == "offdiag_mean") return r.offdiag_mean;
  if (c == "offdiag_min") return r.offdiag_min;
  if (c == "offdiag_max") return r.offdiag_max;
  if (c == "diverged") return r.diverged ? 1.0 : 0.0;
  std::string list;
  for (const auto& name : plot_columns()) list += (list.empty() ? "" : ", ") + name;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown column '" + std::string(c) + "'; available: " + list);
}

namespace {

// Tableau-style hues; raw series use a light tint of the same hue.
constexpr const char* kDark[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
constexpr const char* kLight[] = {"#aec7e8", "#ff9896", "#98df8a", "#c5b0d5",
                                  "#ffbb78", "#c49c94", "#f7b6d2", "#9edae5"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  const char* color;
  double stroke;
};

struct Reference {
  std::string label;
  std::vector<std::pair<double, double>> points;
  bool dashed;
};

}  // namespace

std::string render_svg(const std::vector<PlotInput>& inputs, const PlotOptions& opt) {
  if (inputs.empty()) throw Error(ErrorCode::kInvalidArgument, "plot: no inputs");
  if (opt.columns.empty()) throw Error(ErrorCode::kInvalidArgument, "plot: no columns selected");
  if (opt.ema && !(*opt.ema > 0.0 && *opt.ema <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "plot: --ema must lie in (0, 1]");
  }
  for (const auto& c : opt.columns) column_value(RunRecord{}, c);

  std::vector<Series> series;
  std::size_t hue = 0;
  for (const auto& in : inputs) {
    for (const auto& col : opt.columns) {
      std::vector<double> xs;
      std::vector<double> ys;
      for (const auto& r : in.records) {
        xs.push_back(static_cast<double>(r.iter));
        ys.push_back(column_value(r, col));
      }
      const std::size_t h = hue++ % std::size(kDark);
      const std::string label = in.label + ":" + col;
      if (opt.ema && !ys.empty()) {
        series.push_back({label, xs, ys, kLight[h], 1.0});
        series.push_back({label + " (ema " + tick(*opt.ema) + ")", xs, ema_smooth(ys, *opt.ema),
                          kDark[h], 2.0});
      } else {
        series.push_back({label, xs, ys, kDark[h], 1.5});
      }
    }
  }

  std::vector<Reference> refs;
  for (const auto& in : inputs) {
    if (!in.summary) continue;
    const RunSummary& s = *in.summary;
    if (!s.plateaus.empty()) {
      Reference r{"true MI", {}, false};
      for (const auto& p : s.plateaus) {
        r.points.emplace_back(static_cast<double>(p.begin), p.true_mi);
        r.points.emplace_back(static_cast<double>(std::max(p.begin, p.end - 1)), p.true_mi);
      }
      refs.push_back(std::move(r));
    }
    if (s.estimator == "infonce" && s.batch > 1) {
      const double bound = std::log(static_cast<double>(s.batch));
      refs.push_back({"ln " + std::to_string(s.batch) + " = " + tick(bound),
                      {{0.0, bound}, {static_cast<double>(std::max<long>(s.iterations - 1, 1)), bound}},
                      true});
    }
  }

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  auto extend = [&](double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) extend(s.x[i], s.y[i]);
  }
  for (const auto& r : refs) {
    for (const auto& [x, y] : r.points) extend(x, y);
  }
  if (!std::isfinite(x0)) {
    x0 = 0.0;
    x1 = 1.0;
    y0 = 0.0;
    y1 = 1.0;
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double left = 70, right = 220, top = 40, bottom = 50;
  const double pw = opt.width - left - right;
  const double ph = opt.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
     << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty()) {
    os << "<text x=\"" << num(left) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
       << escape(opt.title) << "</text>\n";
  }
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double yv = y0 + (y1 - y0) * k / 5.0;
    const double xv = x0 + (x1 - x0) * k / 5.0;
    os << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(py(yv))
       << "\" y2=\"" << num(py(yv)) << "\" stroke=\"#eee\"/>\n";
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yv) + 4)
       << "\" text-anchor=\"end\">" << tick(std::round(yv * 1000) / 1000) << "</text>\n";
    os << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + ph + 16)
       << "\" text-anchor=\"middle\">" << tick(std::round(xv)) << "</text>\n";
  }
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(top + ph + 36)
     << "\" text-anchor=\"middle\">iteration</text>\n";
  os << "</g>\n";
  os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw)
     << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#888\"/>\n";

  for (const auto& s : series) {
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << s.stroke
           << "\" points=\"" << pts << "\"/>\n";
      }
      pts.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      if (!pts.empty()) pts.push_back(' ');
      pts += num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    flush();
  }
  for (const auto& r : refs) {
    std::string pts;
    for (const auto& [x, y] : r.points) {
      if (!pts.empty()) pts.push_back(' ');
      pts += num(px(x)) + "," + num(py(y));
    }
    os << "<polyline class=\"reference\" fill=\"none\" stroke=\"#000\" stroke-width=\"1\""
       << (r.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"" << pts << "\"/>\n";
  }

  os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  double ly = top + 10;
  auto legend = [&](const std::string& label, const char* color, bool dashed) {
    os << "<line x1=\"" << num(left + pw + 12) << "\" x2=\"" << num(left + pw + 36) << "\" y1=\""
       << num(ly) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\""
       << (dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    os << "<text x=\"" << num(left + pw + 42) << "\" y=\"" << num(ly + 4) << "\">" << escape(label)
       << "</text>\n";
    ly += 16;
  };
  for (const auto& s : series) legend(s.label, s.color, false);
  for (const auto& r : refs) legend(r.label, "#000", r.dashed);
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace milab
