#include "milab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "milab/error.hpp"

namespace milab {

namespace {

class LineParser {
 public:
  LineParser(std::string_view text, const std::string& source, std::size_t line)
      : s_(text), source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::kParse, source_ + ":" + std::to_string(line_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  std::string bare_key() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                s_[pos_] == '_' || s_[pos_] == '-')) {
      ++pos_;
    }
    if (pos_ == start) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string quoted() {
    expect('"');
    std::string out;
    while (true) {
      if (pos_ >= s_.size()) fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (pos_ >= s_.size()) fail("unterminated escape");
      const char e = s_[pos_++];
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        default: fail(std::string("unknown escape '\\") + e + "'");
      }
    }
    return out;
  }

  double number() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                s_[pos_] == '.' || s_[pos_] == '+' || s_[pos_] == '-' ||
                                s_[pos_] == '_')) {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    std::string digits;
    for (char c : tok) {
      if (c != '_') digits.push_back(c);
    }
    char* end = nullptr;
    const double v = std::strtod(digits.c_str(), &end);
    if (digits.empty() || end != digits.c_str() + digits.size() || !std::isfinite(v)) {
      fail("invalid value '" + tok + "'");
    }
    return v;
  }

  ConfigValue::Data value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return quoted();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true" && !ident_char(pos_ + 4)) {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false" && !ident_char(pos_ + 5)) {
      pos_ += 5;
      return false;
    }
    if (c == '\0' || c == '#') fail("missing value");
    return number();
  }

 private:
  bool ident_char(std::size_t i) const {
    return i < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i])) || s_[i] == '_');
  }

  ConfigValue::Data array() {
    expect('[');
    skip_ws();
    std::vector<double> nums;
    std::vector<std::string> strs;
    bool strings = false;
    bool first = true;
    while (true) {
      skip_ws();
      if (peek() == '\0') fail("unterminated array");
      if (peek() == ']') {
        ++pos_;
        break;
      }
      if (!first) {
        expect(',');
        skip_ws();
        if (peek() == ']') {
          ++pos_;
          break;
        }
      }
      skip_ws();
      if (peek() == '"') {
        if (!first && !strings) fail("arrays must not mix strings and numbers");
        strings = true;
        strs.push_back(quoted());
      } else {
        if (!first && strings) fail("arrays must not mix strings and numbers");
        if (peek() == '\0') fail("unterminated array");
        nums.push_back(number());
      }
      first = false;
    }
    if (strings) return strs;
    return nums;
  }

  std::string_view s_;
  const std::string& source_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace

ConfigDocument parse_config(std::string_view text, std::string source) {
  ConfigDocument doc;
  doc.source = std::move(source);
  ConfigSection* current = nullptr;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++lineno;
    start = end + 1;

    LineParser p(line, doc.source, lineno);
    if (p.at_end_or_comment()) {
      if (end == text.size()) break;
      continue;
    }
    if (p.peek() == '[') {
      p.expect('[');
      const std::string name = p.bare_key();
      p.expect(']');
      if (!p.at_end_or_comment()) p.fail("unexpected text after section header");
      if (doc.sections.count(name)) p.fail("duplicate section [" + name + "]");
      current = &doc.sections[name];
      current->line = lineno;
    } else {
      const std::string key = p.bare_key();
      p.expect('=');
      ConfigValue v{p.value(), lineno};
      if (!p.at_end_or_comment()) p.fail("unexpected text after value");
      if (current == nullptr) p.fail("key '" + key + "' appears before any [section]");
      if (current->entries.count(key)) p.fail("duplicate key '" + key + "'");
      current->entries.emplace(key, std::move(v));
    }
    if (end == text.size()) break;
  }
  return doc;
}

ConfigDocument load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

namespace {

// Reads typed values out of one section and remembers which keys were used.
class SectionReader {
 public:
  SectionReader(const ConfigDocument& doc, const std::string& name)
      : doc_(doc), name_(name) {
    auto it = doc.sections.find(name);
    if (it != doc.sections.end()) section_ = &it->second;
  }

  bool has(const std::string& key) const {
    return section_ != nullptr && section_->entries.count(key) > 0;
  }

  const ConfigValue* find(const std::string& key) {
    if (!has(key)) return nullptr;
    used_.push_back(key);
    return &section_->entries.at(key);
  }

  [[noreturn]] void fail(const ConfigValue& v, const std::string& key, const std::string& what) const {
    throw Error(ErrorCode::kValidation, doc_.source + ":" + std::to_string(v.line) + ": [" + name_ +
                                            "] " + key + ": " + what);
  }

  void number(const std::string& key, double& out) {
    if (const auto* v = find(key)) {
      if (!std::holds_alternative<double>(v->data)) fail(*v, key, "expected a number");
      out = std::get<double>(v->data);
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const auto* v = find(key)) {
      if (!std::holds_alternative<double>(v->data)) fail(*v, key, "expected an integer");
      const double d = std::get<double>(v->data);
      if (d != std::floor(d) || std::abs(d) > 9.0e15) fail(*v, key, "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (d < 0) fail(*v, key, "expected a non-negative integer");
      }
      out = static_cast<Int>(d);
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (!std::holds_alternative<bool>(v->data)) fail(*v, key, "expected true or false");
      out = std::get<bool>(v->data);
    }
  }

  bool string(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!std::holds_alternative<std::string>(v->data)) fail(*v, key, "expected a string");
      out = std::get<std::string>(v->data);
      return true;
    }
    return false;
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const auto* v = find(key)) {
      if (std::holds_alternative<std::vector<double>>(v->data)) {
        out = std::get<std::vector<double>>(v->data);
      } else if (std::holds_alternative<std::vector<std::string>>(v->data) &&
                 std::get<std::vector<std::string>>(v->data).empty()) {
        out.clear();
      } else {
        fail(*v, key, "expected an array of numbers");
      }
    }
  }

  void integers(const std::string& key, std::vector<int>& out) {
    std::vector<double> tmp;
    const ConfigValue* v = section_ && has(key) ? &section_->entries.at(key) : nullptr;
    numbers(key, tmp);
    if (v == nullptr) return;
    out.clear();
    for (double d : tmp) {
      if (d != std::floor(d) || std::abs(d) > 1e9) fail(*v, key, "expected an array of integers");
      out.push_back(static_cast<int>(d));
    }
  }

  void strings(const std::string& key, std::vector<std::string>& out) {
    if (const auto* v = find(key)) {
      if (std::holds_alternative<std::vector<std::string>>(v->data)) {
        out = std::get<std::vector<std::string>>(v->data);
      } else if (std::holds_alternative<std::vector<double>>(v->data) &&
                 std::get<std::vector<double>>(v->data).empty()) {
        out.clear();
      } else {
        fail(*v, key, "expected an array of strings");
      }
    }
  }

  // Wraps enum conversions so their messages carry the line number.
  template <typename F>
  void choice(const std::string& key, F&& apply) {
    if (const auto* v = find(key)) {
      if (!std::holds_alternative<std::string>(v->data)) fail(*v, key, "expected a string");
      try {
        apply(std::get<std::string>(v->data));
      } catch (const Error& e) {
        fail(*v, key, e.what());
      }
    }
  }

  const ConfigValue& at(const std::string& key) const { return section_->entries.at(key); }

  void reject_unused() const {
    if (section_ == nullptr) return;
    for (const auto& [key, value] : section_->entries) {
      if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
        fail(value, key, "unknown key");
      }
    }
  }

 private:
  const ConfigDocument& doc_;
  std::string name_;
  const ConfigSection* section_ = nullptr;
  std::vector<std::string> used_;
};

[[noreturn]] void bad_choice(const std::string& got, const std::string& allowed) {
  throw Error(ErrorCode::kValidation, "unknown value '" + got + "' (expected " + allowed + ")");
}

}  // namespace

RunConfig run_config_from(const ConfigDocument& doc, const std::vector<std::string>& extra_sections) {
  static const std::vector<std::string> known = {"run", "task", "critic", "estimator", "optimizer",
                                                 "drift"};
  for (const auto& [name, section] : doc.sections) {
    const bool ok = std::find(known.begin(), known.end(), name) != known.end() ||
                    std::find(extra_sections.begin(), extra_sections.end(), name) !=
                        extra_sections.end();
    if (!ok) {
      throw Error(ErrorCode::kValidation,
                  doc.source + ":" + std::to_string(section.line) + ": unknown section [" + name + "]");
    }
  }

  RunConfig cfg;

  SectionReader task(doc, "task");
  task.choice("kind", [&](const std::string& k) {
    if (k == "onehot") cfg.task.kind = TaskSpec::Kind::kOneHot;
    else if (k == "gaussian") cfg.task.kind = TaskSpec::Kind::kGaussian;
    else if (k == "cluster") cfg.task.kind = TaskSpec::Kind::kCluster;
    else bad_choice(k, "onehot, gaussian or cluster");
  });
  task.integer("classes", cfg.task.classes);
  task.integer("dim", cfg.task.dim);
  task.numbers("mi_steps", cfg.task.mi_steps);
  task.integer("iters_per_step", cfg.task.iters_per_step);
  task.integer("labels", cfg.task.labels);
  task.integer("input_dim", cfg.task.input_dim);
  task.number("separation_ratio", cfg.task.separation_ratio);
  task.choice("mode", [&](const std::string& m) {
    if (m == "slb") cfg.task.mode = ClusterMode::kSupervised;
    else if (m == "clb") cfg.task.mode = ClusterMode::kContrastive;
    else bad_choice(m, "slb or clb");
  });
  task.numbers("label_probs", cfg.task.label_probs);
  task.reject_unused();

  // Defaults that depend on the task: the one-hot critic has a single
  // hidden layer, cluster tasks use label-aware critics.
  if (cfg.task.kind == TaskSpec::Kind::kOneHot) cfg.critic.hidden = {256};
  if (cfg.task.kind == TaskSpec::Kind::kCluster) {
    cfg.critic.kind = cfg.task.mode == ClusterMode::kSupervised ? CriticKind::kOneHotLabel
                                                                 : CriticKind::kSeparable;
    cfg.critic.hidden = {128};
  }

  SectionReader critic(doc, "critic");
  critic.choice("kind", [&](const std::string& k) { cfg.critic.kind = critic_kind_from_string(k); });
  critic.integers("hidden", cfg.critic.hidden);
  critic.integer("embed_dim", cfg.critic.embed_dim);
  critic.choice("output",
                [&](const std::string& o) { cfg.critic.output = output_activation_from_string(o); });
  critic.reject_unused();

  SectionReader est(doc, "estimator");
  est.choice("kind", [&](const std::string& k) { cfg.estimator.kind = estimator_from_string(k); });
  est.number("tau", cfg.estimator.tau);
  est.number("lambda", cfg.estimator.reg.lambda);
  est.choice("distance", [&](const std::string& d) {
    if (d == "euclidean") cfg.estimator.reg.distance = Distance::kEuclidean;
    else if (d == "log_euclidean") cfg.estimator.reg.distance = Distance::kLogEuclidean;
    else bad_choice(d, "euclidean or log_euclidean");
  });
  if (est.has("target") && !is_dv_family(cfg.estimator.kind)) {
    est.fail(est.at("target"), "target",
             "the target is fixed at 1 for " + std::string(to_string(cfg.estimator.kind)) +
                 "; remove this key");
  }
  est.number("target", cfg.estimator.reg.target);
  est.boolean("js_shifted", cfg.estimator.js_shifted);
  est.reject_unused();

  SectionReader opt(doc, "optimizer");
  opt.choice("kind", [&](const std::string& k) {
    if (k == "sgd") cfg.optimizer = OptimizerSpec::sgd(0.1);
    else if (k == "adam") cfg.optimizer = OptimizerSpec::adam(1e-3);
    else bad_choice(k, "sgd or adam");
  });
  opt.number("lr", cfg.optimizer.lr);
  opt.number("beta1", cfg.optimizer.beta1);
  opt.number("beta2", cfg.optimizer.beta2);
  opt.number("epsilon", cfg.optimizer.epsilon);
  opt.reject_unused();

  SectionReader run(doc, "run");
  run.string("name", cfg.name);
  run.integer("seed", cfg.seed);
  run.integer("iterations", cfg.iterations);
  run.integer("batch", cfg.batch);
  run.integer("log_every", cfg.log_every);
  run.number("output_offset", cfg.output_offset);
  run.integer("eval_n", cfg.eval_n);
  run.integer("train_pool", cfg.train_pool);
  run.reject_unused();

  SectionReader drift(doc, "drift");
  drift.integer("window", cfg.drift_window);
  drift.number("theta_drift", cfg.drift.drift);
  drift.number("theta_stable", cfg.drift.stable);
  drift.reject_unused();

  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidation, doc.source + ": " + e.what());
  }
  return cfg;
}

}  // namespace milab
