#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records primitive operations in execution order. Each recorded
// entry owns its forward value and, after Tape::backward, a gradient of the
// same shape. Var is a lightweight handle (tape pointer + entry index).

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace milab::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  // Value of a 1x1 entry; throws on any other shape.
  double scalar() const;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  // Propagates the gradient held by entry `self` into its operands.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var leaf(Matrix value);
  Var scalar(double value);

  Var record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  // Reverse sweep from a 1x1 loss. Every entry ends with a gradient of its
  // value's shape (zero when unreachable from the loss).
  void backward(Var loss);

  const Matrix& value(std::size_t i) const { return entries_[i].value; }
  const Matrix& grad(std::size_t i) const { return entries_[i].grad; }
  const std::vector<std::size_t>& inputs(std::size_t i) const { return entries_[i].inputs; }

  // Adds `delta` into the gradient accumulator of entry i.
  void accumulate(std::size_t i, Matrix&& delta) {
    Matrix& g = entries_[i].grad;
    if (g.size() == 0) {
      g = std::move(delta);
    } else {
      g += delta;
    }
  }

  template <typename Derived>
  void accumulate(std::size_t i, const Eigen::MatrixBase<Derived>& delta) {
    Matrix& g = entries_[i].grad;
    if (g.size() == 0) {
      g = delta;
    } else {
      g += delta;
    }
  }

  std::size_t size() const { return entries_.size(); }
  bool has_gradients() const { return has_gradients_; }

 private:
  struct Entry {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  bool has_gradients_ = false;
};

// ---- primitives ------------------------------------------------------------

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator-(Var a, double c);
Var operator*(double c, Var a);
Var operator*(Var a, double c);

Var hadamard(Var a, Var b);
// Adds a 1 x cols row vector to every row of a.
Var add_row(Var a, Var row);
// relu(x * w + b) for a 1 x cols bias row b.
Var dense_relu(Var x, Var w, Var b);

Var relu(Var a);
// max(x, 0) + ln(1 + e^{-|x|})
Var softplus(Var a);
Var exp(Var a);
// Throws Error(kDomain) when any entry is <= 0.
Var log(Var a);
Var square(Var a);
// max(min(v, upper), lower); gradient 1 strictly inside, 0 outside.
Var clip(Var a, double lower, double upper);

Var sum(Var a);
Var mean(Var a);
// max-shifted ln sum e^x over every entry, 1x1.
Var logsumexp(Var a);
// ln of the arithmetic mean of e^x over every entry, 1x1.
Var logmeanexp(Var a);
// rows x 1 column of per-row logsumexp.
Var row_logsumexp(Var a);

// Square matrix diagonal as an n x 1 column.
Var diagonal(Var a);
// Off-diagonal entries of a square matrix as an n(n-1) x 1 column, row-major
// pair order: (0,1), (0,2), ..., (1,0), (1,2), ...
Var off_diagonal(Var a);

// For a (n x h) and b (m x h): (n*m) x h with row i*m + j equal to a_i + b_j.
Var pair_sum(Var a, Var b);
// relu(pair_sum(a, b)) without materializing the pre-activation.
Var pair_sum_relu(Var a, Var b);
// Inverse layout of pair_sum for a (n*m) x 1 column: n x m with (i, j) = v[i*m + j].
Var pair_grid(Var v, Eigen::Index n, Eigen::Index m);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);

// ---- finite-difference gradient check -------------------------------------

using Program = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  // Largest |analytic| or |numeric| entry seen; useful for diagnostics.
  double max_gradient = 0.0;
};

// Compares backward gradients against central differences
// (f(p + eps) - f(p - eps)) / (2 eps) for every parameter entry. The per-entry
// relative error is |a - n| / max(|a|, |n|, floor) where floor is 1e-3 of the
// largest gradient magnitude (and at least 1e-10), so entries that are
// numerically zero do not dominate.
GradCheckResult grad_check(const Program& program, std::span<const Matrix> params,
                           double eps = 1e-6);

}  // namespace milab::ad
