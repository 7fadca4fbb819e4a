#include "milab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "milab/error.hpp"

namespace milab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kDomain: return "domain error";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kValidation: return "validation error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kIo: return "i/o error";
  }
  return "unknown error";
}

}  // namespace milab

namespace milab::ad {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw Error(ErrorCode::kShapeMismatch,
              std::string(op) + ": incompatible shapes " + shape_of(a) + " and " + shape_of(b));
}

Tape& tape_of(Var a) {
  if (!a.valid()) {
    throw Error(ErrorCode::kInvalidArgument, "operation on an unbound Var");
  }
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) {
    throw Error(ErrorCode::kInvalidArgument, "operands belong to different tapes");
  }
  return t;
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error(op, a.value(), b.value());
  }
}

double max_coeff_or_neg_inf(const Matrix& m) {
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  return m.maxCoeff();
}

// max + ln sum e^{x - max}; returns -inf for an all -inf input and propagates
// +inf / NaN untouched.
double stable_logsumexp(const Matrix& m) {
  const double hi = max_coeff_or_neg_inf(m);
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((m.array() - hi).exp().sum());
}

}  // namespace

// ---- Var / Tape ------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(index_); }
const Matrix& Var::grad() const { return tape_->grad(index_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "scalar() on a " + shape_of(v) + " value");
  }
  return v(0, 0);
}

Var Tape::leaf(Matrix value) { return record(std::move(value), {}, nullptr); }

Var Tape::scalar(double value) { return leaf(Matrix::Constant(1, 1, value)); }

Var Tape::record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  for (std::size_t in : inputs) {
    if (in >= entries_.size()) {
      throw Error(ErrorCode::kInvalidArgument, "operand recorded after its consumer");
    }
  }
  entries_.push_back(Entry{std::move(value), Matrix(), std::move(inputs), std::move(backward)});
  return Var(this, entries_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) {
    throw Error(ErrorCode::kInvalidArgument, "backward: loss belongs to another tape");
  }
  const Matrix& lv = value(loss.index());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "backward: loss must be 1x1, got " + shape_of(lv));
  }
  for (auto& e : entries_) e.grad.resize(0, 0);
  entries_[loss.index()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (e.grad.size() == 0 || !e.backward) continue;
    e.backward(*this, i);
  }
  for (auto& e : entries_) {
    if (e.grad.size() == 0) e.grad = Matrix::Zero(e.value.rows(), e.value.cols());
  }
  has_gradients_ = true;
}

// ---- linear algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Matrix out;
  out.noalias() = a.value() * b.value();
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, g * tp.value(ib).transpose());
    tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.value(), b.value());
  Matrix out;
  out.noalias() = a.value() * b.value().transpose();
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, g * tp.value(ib));
    tp.accumulate(ib, g.transpose() * tp.value(ia));
  });
}

// ---- elementwise arithmetic ----------------------------------------------------

Var operator+(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a, b);
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var operator-(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a, b);
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, -tp.grad(self));
  });
}

Var operator-(Var a) { return -1.0 * a; }

Var operator+(Var a, double c) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.index();
  return t.record((a.value().array() + c).matrix(), {ia},
                  [ia](Tape& tp, std::size_t self) { tp.accumulate(ia, tp.grad(self)); });
}

Var operator-(Var a, double c) { return a + (-c); }

Var operator*(double c, Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.index();
  return t.record(c * a.value(), {ia},
                  [ia, c](Tape& tp, std::size_t self) { tp.accumulate(ia, c * tp.grad(self)); });
}

Var operator*(Var a, double c) { return c * a; }

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("hadamard", a, b);
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(a.value().cwiseProduct(b.value()), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
                    tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
                  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.value(), row.value());
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  const std::size_t ia = a.index(), ir = row.index();
  return t.record(std::move(out), {ia, ir}, [ia, ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, g);
    tp.accumulate(ir, g.colwise().sum());
  });
}

Var dense_relu(Var x, Var w, Var b) {
  Tape& t = tape_of(x, w);
  tape_of(x, b);
  if (x.cols() != w.rows()) shape_error("dense_relu", x.value(), w.value());
  if (b.rows() != 1 || b.cols() != w.cols()) shape_error("dense_relu", w.value(), b.value());
  Matrix out;
  out.noalias() = x.value() * w.value();
  out = (out.rowwise() + b.value().row(0)).cwiseMax(0.0);
  const std::size_t ix = x.index(), iw = w.index(), ib = b.index();
  return t.record(std::move(out), {ix, iw, ib}, [ix, iw, ib](Tape& tp, std::size_t self) {
    Matrix gz = (tp.value(self).array() > 0.0).select(tp.grad(self).array(), 0.0).matrix();
    tp.accumulate(ib, gz.colwise().sum());
    tp.accumulate(iw, tp.value(ix).transpose() * gz);
    tp.accumulate(ix, gz * tp.value(iw).transpose());
  });
}

// ---- elementwise nonlinearities ----------------------------------------------

Var relu(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.index();
  return t.record(a.value().cwiseMax(0.0), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    tp.accumulate(ia, (x.array() > 0.0).select(tp.grad(self).array(), 0.0).matrix());
  });
}

Var softplus(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.index();
  const auto x = a.value().array();
  Matrix out = (x.max(0.0) + (-x.abs()).exp().log1p()).matrix();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    // d/dx softplus = sigmoid(x), evaluated without overflow on either tail.
    const auto x = tp.value(ia).array();
    const auto e = (-x.abs()).exp();
    const auto sig = (x >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
    tp.accumulate(ia, (tp.grad(self).array() * sig).matrix());
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.index();
  return t.record(a.value().array().exp().matrix(), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self).cwiseProduct(tp.value(self)));
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x.data()[i] <= 0.0) {
      throw Error(ErrorCode::kDomain,
                  "log: non-positive argument " + std::to_string(x.data()[i]));
    }
  }
  const std::size_t ia = a.index();
  return t.record(x.array().log().matrix(), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, (tp.grad(self).array() / tp.value(ia).array()).matrix());
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.index();
  return t.record(a.value().array().square().matrix(), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, (2.0 * tp.grad(self).array() * tp.value(ia).array()).matrix());
  });
}

Var clip(Var a, double lower, double upper) {
  if (!(lower <= upper)) {
    throw Error(ErrorCode::kInvalidArgument, "clip: lower bound exceeds upper bound");
  }
  Tape& t = tape_of(a);
  const std::size_t ia = a.index();
  Matrix out = a.value().cwiseMin(upper).cwiseMax(lower);
  return t.record(std::move(out), {ia}, [ia, lower, upper](Tape& tp, std::size_t self) {
    const auto x = tp.value(ia).array();
    const auto inside = (x > lower) && (x < upper);
    tp.accumulate(ia, inside.select(tp.grad(self).array(), 0.0).matrix());
  });
}

// ---- reductions ---------------------------------------------------------------

Var sum(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.index();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {ia},
                  [ia](Tape& tp, std::size_t self) {
                    const Matrix& x = tp.value(ia);
                    tp.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0)));
                  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  if (a.value().size() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "mean of an empty matrix");
  }
  const std::size_t ia = a.index();
  const double n = static_cast<double>(a.value().size());
  return t.record(Matrix::Constant(1, 1, a.value().sum() / n), {ia},
                  [ia, n](Tape& tp, std::size_t self) {
                    const Matrix& x = tp.value(ia);
                    tp.accumulate(ia,
                                  Matrix::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0) / n));
                  });
}

Var logsumexp(Var a) {
  Tape& t = tape_of(a);
  if (a.value().size() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "logsumexp of an empty matrix");
  }
  const std::size_t ia = a.index();
  return t.record(Matrix::Constant(1, 1, stable_logsumexp(a.value())), {ia},
                  [ia](Tape& tp, std::size_t self) {
                    const double lse = tp.value(self)(0, 0);
                    const double g = tp.grad(self)(0, 0);
                    tp.accumulate(ia, (g * (tp.value(ia).array() - lse).exp()).matrix());
                  });
}

Var logmeanexp(Var a) {
  const double n = static_cast<double>(a.value().size());
  return logsumexp(a) - std::log(n);
}

Var row_logsumexp(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (x.cols() == 0) throw Error(ErrorCode::kShapeMismatch, "row_logsumexp with zero columns");
  Matrix out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) out(r, 0) = stable_logsumexp(x.row(r));
  const std::size_t ia = a.index();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& xv = tp.value(ia);
    const Matrix& lse = tp.value(self);
    const Matrix& g = tp.grad(self);
    Matrix d(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      d.row(r) = g(r, 0) * (xv.row(r).array() - lse(r, 0)).exp();
    }
    tp.accumulate(ia, std::move(d));
  });
}

// ---- structural -----------------------------------------------------------------

Var diagonal(Var a) {
  Tape& t = tape_of(a);
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "diagonal of a non-square " + shape_of(a.value()));
  }
  const std::size_t ia = a.index();
  Matrix out = a.value().diagonal();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    d.diagonal() = tp.grad(self).col(0);
    tp.accumulate(ia, std::move(d));
  });
}

Var off_diagonal(Var a) {
  Tape& t = tape_of(a);
  const Eigen::Index n = a.rows();
  if (n != a.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "off_diagonal of a non-square " + shape_of(a.value()));
  }
  if (n < 2) throw Error(ErrorCode::kShapeMismatch, "off_diagonal needs at least 2x2");
  const Matrix& x = a.value();
  Matrix out(n * (n - 1), 1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) out(k++, 0) = x(i, j);
    }
  }
  const std::size_t ia = a.index();
  return t.record(std::move(out), {ia}, [ia, n](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix d = Matrix::Zero(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i != j) d(i, j) = g(k++, 0);
      }
    }
    tp.accumulate(ia, std::move(d));
  });
}

Var pair_sum(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols()) shape_error("pair_sum", a.value(), b.value());
  const Eigen::Index n = a.rows(), m = b.rows(), h = a.cols();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(n * m, h);
  for (Eigen::Index c = 0; c < h; ++c) {
    double* col = out.col(c).data();
    const double* bc = bv.col(c).data();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ai = av(i, c);
      double* dst = col + i * m;
      for (Eigen::Index j = 0; j < m; ++j) dst[j] = ai + bc[j];
    }
  }
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(out), {ia, ib}, [ia, ib, n, m, h](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix ga = Matrix::Zero(n, h);
    Matrix gb = Matrix::Zero(m, h);
    for (Eigen::Index c = 0; c < h; ++c) {
      const double* col = g.col(c).data();
      double* gbc = gb.col(c).data();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double* src = col + i * m;
        double acc = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
          acc += src[j];
          gbc[j] += src[j];
        }
        ga(i, c) = acc;
      }
    }
    tp.accumulate(ia, std::move(ga));
    tp.accumulate(ib, std::move(gb));
  });
}

Var pair_sum_relu(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols()) shape_error("pair_sum_relu", a.value(), b.value());
  const Eigen::Index n = a.rows(), m = b.rows(), h = a.cols();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(n * m, h);
  for (Eigen::Index c = 0; c < h; ++c) {
    double* col = out.col(c).data();
    const double* bc = bv.col(c).data();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ai = av(i, c);
      double* dst = col + i * m;
      for (Eigen::Index j = 0; j < m; ++j) dst[j] = std::max(ai + bc[j], 0.0);
    }
  }
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(out), {ia, ib}, [ia, ib, n, m, h](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix ga = Matrix::Zero(n, h);
    Matrix gb = Matrix::Zero(m, h);
    for (Eigen::Index c = 0; c < h; ++c) {
      const double* gc = g.col(c).data();
      const double* yc = y.col(c).data();
      double* gbc = gb.col(c).data();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double* src = gc + i * m;
        const double* act = yc + i * m;
        double acc = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
          const double d = act[j] > 0.0 ? src[j] : 0.0;
          acc += d;
          gbc[j] += d;
        }
        ga(i, c) = acc;
      }
    }
    tp.accumulate(ia, std::move(ga));
    tp.accumulate(ib, std::move(gb));
  });
}

Var pair_grid(Var v, Eigen::Index n, Eigen::Index m) {
  Tape& t = tape_of(v);
  if (v.cols() != 1 || v.rows() != n * m) {
    throw Error(ErrorCode::kShapeMismatch, "pair_grid: expected a " + std::to_string(n * m) +
                                               "x1 column, got " + shape_of(v.value()));
  }
  Matrix out(n, m);
  const double* src = v.value().data();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = src[i * m + j];
  }
  const std::size_t iv = v.index();
  return t.record(std::move(out), {iv}, [iv, n, m](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix d(n * m, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) d(i * m + j, 0) = g(i, j);
    }
    tp.accumulate(iv, std::move(d));
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "slice_rows: range [" + std::to_string(start) + ", " +
                                               std::to_string(start + count) +
                                               ") outside " + shape_of(a.value()));
  }
  const std::size_t ia = a.index();
  Matrix out = a.value().middleRows(start, count);
  return t.record(std::move(out), {ia}, [ia, start, count](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    d.middleRows(start, count) = tp.grad(self);
    tp.accumulate(ia, std::move(d));
  });
}

}  // namespace milab::ad
