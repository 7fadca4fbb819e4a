#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "milab/autodiff.hpp"

namespace milab {

using Matrix = ad::Matrix;

enum class CriticKind {
  kConcat,       // T(x, y) = MLP([x ; y]) -> scalar
  kSeparable,    // T(x1, x2) = f(x1) . f(x2), shared embedder
  kOneHotLabel,  // T(x, y) = f(x) . o(y), y given as a one-hot row
};

enum class OutputActivation { kNone, kRelu, kSoftplus };

std::string_view to_string(OutputActivation a);
// Accepts "none" (alias "linear"), "relu" and "softplus".
OutputActivation output_activation_from_string(std::string_view name);

struct MlpSpec {
  // Input width first, output width last. Concat critics end in 1.
  std::vector<int> widths;
  OutputActivation output = OutputActivation::kNone;
  std::uint64_t seed = 0;
  // Concat only: number of leading input columns that belong to x. 0 means
  // widths.front() / 2.
  int x_dim = 0;
};

struct NamedParameter {
  std::string name;
  Matrix value;
};

class Critic {
 public:
  // Parameters: weights uniform in +-sqrt(1/fan_in), biases zero. The concat
  // output layer has no trainable bias; it carries a fixed output offset
  // (initially 0) instead.
  static Critic build(const MlpSpec& spec, CriticKind kind);

  struct Graph {
    ad::Var scores;
    std::vector<ad::Var> params;
  };

  // Records the N x M score matrix with entry (i, j) = T(xs_i, ys_j).
  Graph forward(ad::Tape& tape, const Matrix& xs, const Matrix& ys) const;

  // Same, with the parameters supplied as tape variables (used by
  // gradient checks that perturb parameters directly).
  ad::Var scores_with(ad::Tape& tape, std::span<const ad::Var> params, const Matrix& xs,
                      const Matrix& ys) const;

  Matrix score_matrix(const Matrix& xs, const Matrix& ys) const;

  // Embedder output f(xs) for separable and one-hot-label critics.
  Matrix embed(const Matrix& xs) const;

  CriticKind kind() const { return kind_; }
  const MlpSpec& spec() const { return spec_; }
  int x_dim() const { return x_dim_; }

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<Matrix> parameter_values() const;

  double output_offset() const { return output_offset_; }
  // Adds a constant to every concat score (no effect on gradients).
  void shift_output(double c);

 private:
  Critic(MlpSpec spec, CriticKind kind) : spec_(std::move(spec)), kind_(kind) {}

  // input_activated: `input` already has the ReLU of layer first_layer - 1.
  ad::Var mlp(ad::Tape& tape, std::span<const ad::Var> params, ad::Var input,
              std::size_t first_layer, bool input_activated = false) const;

  MlpSpec spec_;
  CriticKind kind_;
  int x_dim_ = 0;
  double output_offset_ = 0.0;
  std::vector<NamedParameter> params_;
};

// Checkpoint JSON: critic metadata ("kind", "widths", "output", "x_dim",
// "output_offset") followed by "parameters", a flat list of
// {"name", "shape": [rows, cols], "values": [row-major doubles]} in parameter
// order. Keys are written in exactly this order; see docs/formats.md.
void save_checkpoint(const Critic& critic, std::ostream& out);
Critic load_checkpoint(std::istream& in);

}  // namespace milab
