#include "milab/critic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "milab/error.hpp"
#include "milab/rng.hpp"

namespace milab {

namespace {

[[noreturn]] void invalid(const std::string& msg) {
  throw Error(ErrorCode::kInvalidArgument, "critic: " + msg);
}

void validate(const MlpSpec& spec, CriticKind kind) {
  if (spec.widths.size() < 2) invalid("need at least an input and an output width");
  for (int w : spec.widths) {
    if (w <= 0) invalid("layer widths must be positive");
  }
  if (kind == CriticKind::kConcat) {
    if (spec.widths.back() != 1) invalid("concat critic must end in width 1");
    const int x_dim = spec.x_dim == 0 ? spec.widths.front() / 2 : spec.x_dim;
    if (x_dim <= 0 || x_dim >= spec.widths.front()) {
      invalid("concat x_dim must split the input width into two non-empty parts");
    }
  }
}

}  // namespace

std::string_view to_string(OutputActivation a) {
  switch (a) {
    case OutputActivation::kNone: return "none";
    case OutputActivation::kRelu: return "relu";
    case OutputActivation::kSoftplus: return "softplus";
  }
  return "none";
}

OutputActivation output_activation_from_string(std::string_view name) {
  if (name == "none" || name == "linear") return OutputActivation::kNone;
  if (name == "relu") return OutputActivation::kRelu;
  if (name == "softplus") return OutputActivation::kSoftplus;
  throw Error(ErrorCode::kValidation, "unknown output activation '" + std::string(name) +
                                          "' (expected none, relu or softplus)");
}

Critic Critic::build(const MlpSpec& spec, CriticKind kind) {
  validate(spec, kind);
  Critic critic(spec, kind);
  critic.x_dim_ = kind == CriticKind::kConcat
                      ? (spec.x_dim == 0 ? spec.widths.front() / 2 : spec.x_dim)
                      : spec.widths.front();

  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(SeedStream::kCriticInit)));
  const std::size_t layers = spec.widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int fan_in = spec.widths[l];
    const int fan_out = spec.widths[l + 1];
    const double bound = std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (int r = 0; r < fan_in; ++r) {
      for (int c = 0; c < fan_out; ++c) w(r, c) = uniform(rng);
    }
    const std::string prefix = "layer" + std::to_string(l);
    critic.params_.push_back({prefix + ".weight", std::move(w)});
    const bool last = l + 1 == layers;
    if (!(last && kind == CriticKind::kConcat)) {
      critic.params_.push_back({prefix + ".bias", Matrix::Zero(1, fan_out)});
    }
  }
  return critic;
}

std::vector<Matrix> Critic::parameter_values() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void Critic::shift_output(double c) { output_offset_ += c; }

// Applies layers [first_layer, L) of the MLP to `input`, which is already the
// pre-activation of layer first_layer - 1 (or the raw input when 0).
ad::Var Critic::mlp(ad::Tape& tape, std::span<const ad::Var> params, ad::Var input,
                    std::size_t first_layer, bool input_activated) const {
  (void)tape;
  const std::size_t layers = spec_.widths.size() - 1;
  std::size_t p = 0;
  // Skip parameters of layers before first_layer.
  for (std::size_t l = 0; l < first_layer; ++l) {
    p += (l + 1 == layers && kind_ == CriticKind::kConcat) ? 1 : 2;
  }
  ad::Var h = input;
  if (first_layer > 0 && !input_activated) h = ad::relu(h);
  for (std::size_t l = first_layer; l < layers; ++l) {
    if (l + 1 < layers) {
      h = ad::dense_relu(h, params[p], params[p + 1]);
      p += 2;
      continue;
    }
    h = ad::matmul(h, params[p++]);
    if (kind_ != CriticKind::kConcat) h = ad::add_row(h, params[p++]);
  }
  return h;
}

ad::Var Critic::scores_with(ad::Tape& tape, std::span<const ad::Var> params, const Matrix& xs,
                            const Matrix& ys) const {
  if (params.size() != params_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "critic: parameter count mismatch");
  }
  const Eigen::Index n = xs.rows();
  const Eigen::Index m = ys.rows();
  if (n < 1 || m < 1) throw Error(ErrorCode::kInvalidArgument, "critic: empty batch");

  ad::Var scores;
  switch (kind_) {
    case CriticKind::kConcat: {
      const int in = spec_.widths.front();
      const int y_dim = in - x_dim_;
      if (xs.cols() != x_dim_ || ys.cols() != y_dim) {
        throw Error(ErrorCode::kShapeMismatch,
                    "critic: concat expects x width " + std::to_string(x_dim_) + " and y width " +
                        std::to_string(y_dim));
      }
      // First layer on [x ; y] splits into x W_x + y W_y, evaluated once per
      // sample and combined for every (i, j) pair.
      ad::Var w0 = params[0];
      ad::Var x = tape.leaf(xs);
      ad::Var y = tape.leaf(ys);
      ad::Var ax = ad::matmul(x, ad::slice_rows(w0, 0, x_dim_));
      ad::Var by = ad::matmul(y, ad::slice_rows(w0, x_dim_, y_dim));
      const bool single_layer = spec_.widths.size() == 2;
      if (!single_layer) ax = ad::add_row(ax, params[1]);
      ad::Var out = single_layer ? ad::pair_sum(ax, by)
                                 : mlp(tape, params, ad::pair_sum_relu(ax, by), 1, true);
      scores = ad::pair_grid(out, n, m);
      break;
    }
    case CriticKind::kSeparable: {
      if (xs.cols() != spec_.widths.front() || ys.cols() != spec_.widths.front()) {
        throw Error(ErrorCode::kShapeMismatch, "critic: separable input width mismatch");
      }
      ad::Var fx = mlp(tape, params, tape.leaf(xs), 0);
      ad::Var fy = mlp(tape, params, tape.leaf(ys), 0);
      scores = ad::matmul_nt(fx, fy);
      break;
    }
    case CriticKind::kOneHotLabel: {
      if (xs.cols() != spec_.widths.front() || ys.cols() != spec_.widths.back()) {
        throw Error(ErrorCode::kShapeMismatch,
                    "critic: one-hot-label expects label rows of width " +
                        std::to_string(spec_.widths.back()));
      }
      ad::Var fx = mlp(tape, params, tape.leaf(xs), 0);
      scores = ad::matmul_nt(fx, tape.leaf(ys));
      break;
    }
  }
  if (output_offset_ != 0.0) scores = scores + output_offset_;
  if (spec_.output == OutputActivation::kSoftplus) scores = ad::softplus(scores);
  if (spec_.output == OutputActivation::kRelu) scores = ad::relu(scores);
  return scores;
}

Critic::Graph Critic::forward(ad::Tape& tape, const Matrix& xs, const Matrix& ys) const {
  Graph g;
  g.params.reserve(params_.size());
  for (const auto& p : params_) g.params.push_back(tape.leaf(p.value));
  g.scores = scores_with(tape, g.params, xs, ys);
  return g;
}

Matrix Critic::score_matrix(const Matrix& xs, const Matrix& ys) const {
  ad::Tape tape;
  return forward(tape, xs, ys).scores.value();
}

Matrix Critic::embed(const Matrix& xs) const {
  if (kind_ == CriticKind::kConcat) {
    throw Error(ErrorCode::kInvalidArgument, "critic: concat critics have no embedder");
  }
  if (xs.cols() != spec_.widths.front()) {
    throw Error(ErrorCode::kShapeMismatch, "critic: embed input width mismatch");
  }
  ad::Tape tape;
  std::vector<ad::Var> params;
  for (const auto& p : params_) params.push_back(tape.leaf(p.value));
  return mlp(tape, params, tape.leaf(xs), 0).value();
}

}  // namespace milab
