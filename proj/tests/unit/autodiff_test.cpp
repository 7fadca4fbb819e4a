#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "milab/autodiff.hpp"
#include "milab/error.hpp"
#include "support.hpp"

namespace ad = milab::ad;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using milab::testing::uniform;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }

Matrix row(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) m(0, i++) = v;
  return m;
}

// Reduces a matrix-valued op to a scalar with fixed random weights so every
// output entry contributes a distinct gradient.
ad::Program weighted(std::function<Var(Tape&, std::span<const Var>)> op, Matrix weights) {
  return [op = std::move(op), weights = std::move(weights)](Tape& t, std::span<const Var> p) {
    return ad::sum(ad::hadamard(op(t, p), t.leaf(weights)));
  };
}

struct Primitive {
  std::string name;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  Eigen::Index out_rows, out_cols;
  std::function<Var(Tape&, std::span<const Var>)> op;
  double lo = -3.0;
};

std::vector<Primitive> primitives() {
  using S = std::span<const Var>;
  return {
      {"matmul", {{3, 4}, {4, 2}}, 3, 2, [](Tape&, S p) { return ad::matmul(p[0], p[1]); }},
      {"matmul_nt", {{3, 4}, {2, 4}}, 3, 2, [](Tape&, S p) { return ad::matmul_nt(p[0], p[1]); }},
      {"add", {{3, 2}, {3, 2}}, 3, 2, [](Tape&, S p) { return p[0] + p[1]; }},
      {"sub", {{3, 2}, {3, 2}}, 3, 2, [](Tape&, S p) { return p[0] - p[1]; }},
      {"neg", {{3, 2}}, 3, 2, [](Tape&, S p) { return -p[0]; }},
      {"scalar_ops", {{3, 2}}, 3, 2, [](Tape&, S p) { return 2.5 * (p[0] + 1.0) - 0.5; }},
      {"hadamard", {{3, 2}, {3, 2}}, 3, 2, [](Tape&, S p) { return ad::hadamard(p[0], p[1]); }},
      {"add_row", {{3, 2}, {1, 2}}, 3, 2, [](Tape&, S p) { return ad::add_row(p[0], p[1]); }},
      {"dense_relu", {{3, 4}, {4, 2}, {1, 2}}, 3, 2,
       [](Tape&, S p) { return ad::dense_relu(p[0], p[1], p[2]); }},
      {"relu", {{3, 2}}, 3, 2, [](Tape&, S p) { return ad::relu(p[0]); }},
      {"softplus", {{3, 2}}, 3, 2, [](Tape&, S p) { return ad::softplus(p[0]); }},
      {"exp", {{3, 2}}, 3, 2, [](Tape&, S p) { return ad::exp(p[0]); }},
      {"log", {{3, 2}}, 3, 2, [](Tape&, S p) { return ad::log(p[0]); }, 0.1},
      {"square", {{3, 2}}, 3, 2, [](Tape&, S p) { return ad::square(p[0]); }},
      {"clip", {{3, 2}}, 3, 2, [](Tape&, S p) { return ad::clip(p[0], -1.0, 1.5); }},
      {"sum", {{3, 2}}, 1, 1, [](Tape&, S p) { return ad::sum(p[0]); }},
      {"mean", {{3, 2}}, 1, 1, [](Tape&, S p) { return ad::mean(p[0]); }},
      {"logsumexp", {{3, 2}}, 1, 1, [](Tape&, S p) { return ad::logsumexp(p[0]); }},
      {"logmeanexp", {{3, 2}}, 1, 1, [](Tape&, S p) { return ad::logmeanexp(p[0]); }},
      {"row_logsumexp", {{3, 4}}, 3, 1, [](Tape&, S p) { return ad::row_logsumexp(p[0]); }},
      {"diagonal", {{3, 3}}, 3, 1, [](Tape&, S p) { return ad::diagonal(p[0]); }},
      {"off_diagonal", {{3, 3}}, 6, 1, [](Tape&, S p) { return ad::off_diagonal(p[0]); }},
      {"pair_sum", {{2, 3}, {3, 3}}, 6, 3, [](Tape&, S p) { return ad::pair_sum(p[0], p[1]); }},
      {"pair_sum_relu", {{2, 3}, {3, 3}}, 6, 3,
       [](Tape&, S p) { return ad::pair_sum_relu(p[0], p[1]); }},
      {"pair_grid", {{6, 1}}, 2, 3, [](Tape&, S p) { return ad::pair_grid(p[0], 2, 3); }},
      {"slice_rows", {{4, 2}}, 2, 2, [](Tape&, S p) { return ad::slice_rows(p[0], 1, 2); }},
  };
}

}  // namespace

TEST(Autodiff, ClipExample) {
  Tape t;
  Var v = t.leaf(m1(12.0));
  Var c = ad::clip(v, -10.0, 10.0);
  EXPECT_EQ(c.scalar(), 10.0);
  t.backward(ad::sum(c));
  EXPECT_EQ(v.grad()(0, 0), 0.0);
}

TEST(Autodiff, ClipInteriorGradientIsOne) {
  const ad::Program f = [](Tape&, std::span<const Var> p) { return ad::sum(ad::clip(p[0], -1, 1)); };
  Tape t;
  Var x = t.leaf(m1(0.5));
  t.backward(f(t, std::vector<Var>{x}));
  EXPECT_EQ(x.grad()(0, 0), 1.0);
  const std::vector<Matrix> params{m1(0.5)};
  EXPECT_LT(ad::grad_check(f, params).max_relative_error, 1e-8);
}

TEST(Autodiff, LogsumexpOfEqualEntries) {
  Tape t;
  EXPECT_NEAR(ad::logsumexp(t.leaf(row({0.0, 0.0}))).scalar(), std::log(2.0), 1e-15);
}

TEST(Autodiff, LogsumexpMatchesShiftedFormula) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix x = uniform(4, 5, -700.0, 700.0, seed);
    const double hi = x.maxCoeff();
    const double expected = hi + std::log((x.array() - hi).exp().sum());
    Tape t;
    const double got = ad::logsumexp(t.leaf(x)).scalar();
    ASSERT_TRUE(std::isfinite(got));
    EXPECT_DOUBLE_EQ(got, expected);
  }
}

TEST(Autodiff, SoftplusDoesNotOverflow) {
  // Extended-precision reference: x + log1p(e^-x).
  for (double x : {1000.0, 700.0, 40.0, 1.0, 0.0, -1.0, -40.0, -1000.0}) {
    const long double ref = std::max(0.0L, static_cast<long double>(x)) +
                            std::log1p(std::exp(-std::fabs(static_cast<long double>(x))));
    Tape t;
    const double got = ad::softplus(t.leaf(m1(x))).scalar();
    EXPECT_NEAR(got, static_cast<double>(ref), 1e-15 * std::max(1.0, std::fabs(x))) << x;
  }
  Tape t;
  EXPECT_EQ(ad::softplus(t.leaf(m1(1000.0))).scalar(), 1000.0);
}

TEST(Autodiff, ExpDerivativeAtZero) {
  Tape t;
  Var x = t.leaf(m1(0.0));
  t.backward(ad::exp(x));
  EXPECT_EQ(x.grad()(0, 0), 1.0);
}

TEST(Autodiff, LogMeanExpGradientIsSoftmax) {
  Tape t;
  Var x = t.leaf(row({0.0, std::log(3.0)}));
  t.backward(ad::logmeanexp(x));
  EXPECT_NEAR(x.grad()(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(x.grad()(0, 1), 0.75, 1e-15);
}

TEST(Autodiff, QuadraticGradCheck) {
  const ad::Program f = [](Tape&, std::span<const Var> p) { return ad::square(p[0]); };
  const std::vector<Matrix> params{m1(3.0)};
  EXPECT_LT(ad::grad_check(f, params, 1e-5).max_relative_error, 1e-6);
}

TEST(Autodiff, FanOutAccumulates) {
  Tape t;
  Var x = t.leaf(m1(2.0));
  Var y = ad::hadamard(x, x) + x;  // x^2 + x
  t.backward(y);
  EXPECT_EQ(x.grad()(0, 0), 5.0);
}

TEST(Autodiff, GradientShapesMatchValuesAndUnreachedAreZero) {
  Tape t;
  Var a = t.leaf(uniform(3, 4, -1, 1, 1));
  Var unused = t.leaf(uniform(2, 5, -1, 1, 2));
  Var b = t.leaf(uniform(4, 2, -1, 1, 3));
  Var loss = ad::mean(ad::relu(ad::matmul(a, b)));
  t.backward(loss);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(t.grad(i).rows(), t.value(i).rows());
    EXPECT_EQ(t.grad(i).cols(), t.value(i).cols());
  }
  EXPECT_TRUE(unused.grad().isZero(0.0));
  EXPECT_TRUE(t.has_gradients());
}

TEST(Autodiff, OperandsPrecedeConsumers) {
  Tape t;
  Var a = t.leaf(uniform(2, 2, -1, 1, 4));
  Var b = ad::exp(ad::matmul(a, a));
  ad::sum(b);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t in : t.inputs(i)) EXPECT_LT(in, i);
  }
}

TEST(Autodiff, StructuredErrors) {
  Tape t;
  Var a = t.leaf(Matrix::Ones(2, 3));
  Var b = t.leaf(Matrix::Ones(2, 3));
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const milab::Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return milab::ErrorCode::kIo;
  };
  EXPECT_EQ(code_of([&] { ad::matmul(a, b); }), milab::ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([&] { a + t.leaf(Matrix::Ones(3, 2)); }), milab::ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([&] { ad::log(t.leaf(row({1.0, 0.0}))); }), milab::ErrorCode::kDomain);
  EXPECT_EQ(code_of([&] { ad::log(t.leaf(row({-2.0}))); }), milab::ErrorCode::kDomain);
  EXPECT_EQ(code_of([&] { t.backward(a); }), milab::ErrorCode::kShapeMismatch);
  Tape other;
  EXPECT_EQ(code_of([&] { a + other.leaf(Matrix::Ones(2, 3)); }),
            milab::ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { ad::grad_check([](Tape& tp, std::span<const Var>) { return tp.scalar(1); },
                                         std::vector<Matrix>{m1(1.0)}, 0.0); }),
            milab::ErrorCode::kInvalidArgument);
}

TEST(Autodiff, GradCheckRejectsNonFiniteProgram) {
  const ad::Program f = [](Tape&, std::span<const Var> p) { return ad::sum(ad::exp(p[0])); };
  EXPECT_THROW(ad::grad_check(f, std::vector<Matrix>{m1(800.0)}), milab::Error);
}

TEST(Autodiff, PairSumLayout) {
  Tape t;
  const Matrix a = uniform(2, 3, -1, 1, 5);
  const Matrix b = uniform(4, 3, -1, 1, 6);
  Var ps = ad::pair_sum(t.leaf(a), t.leaf(b));
  Var psr = ad::pair_sum_relu(t.leaf(a), t.leaf(b));
  ASSERT_EQ(ps.rows(), 8);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) {
      const Eigen::RowVectorXd expect = a.row(i) + b.row(j);
      EXPECT_TRUE(ps.value().row(i * 4 + j).isApprox(expect, 0.0));
      EXPECT_TRUE(psr.value().row(i * 4 + j).isApprox(expect.cwiseMax(0.0), 0.0));
    }
  }
  Var v = t.leaf(uniform(8, 1, -1, 1, 7));
  Var g = ad::pair_grid(v, 2, 4);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_EQ(g.value()(i, j), v.value()(i * 4 + j, 0));
  }
}

TEST(Autodiff, OffDiagonalOrder) {
  Tape t;
  Matrix s(3, 3);
  s << 0, 1, 2, 3, 4, 5, 6, 7, 8;
  Var od = ad::off_diagonal(t.leaf(s));
  const std::vector<double> expect{1, 2, 3, 5, 6, 7};
  ASSERT_EQ(od.rows(), 6);
  for (int k = 0; k < 6; ++k) EXPECT_EQ(od.value()(k, 0), expect[k]);
}

TEST(Autodiff, DenseReluMatchesComposition) {
  const Matrix x = uniform(5, 4, -2, 2, 8);
  const Matrix w = uniform(4, 3, -2, 2, 9);
  const Matrix b = uniform(1, 3, -2, 2, 10);
  Tape t1, t2;
  Var fused = ad::dense_relu(t1.leaf(x), t1.leaf(w), t1.leaf(b));
  Var plain = ad::relu(ad::add_row(ad::matmul(t2.leaf(x), t2.leaf(w)), t2.leaf(b)));
  EXPECT_TRUE(fused.value().isApprox(plain.value(), 0.0));
}

class PrimitiveGradients : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradients, MatchCentralDifferences) {
  const Primitive prim = primitives()[GetParam()];
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<Matrix> params;
    std::uint64_t s = seed * 131;
    for (auto [r, c] : prim.shapes) params.push_back(uniform(r, c, prim.lo, 3.0, ++s));
    const Matrix weights = uniform(prim.out_rows, prim.out_cols, -1.0, 1.0, seed + 7777);
    const auto result = ad::grad_check(weighted(prim.op, weights), params);
    worst = std::max(worst, result.max_relative_error);
  }
  EXPECT_LT(worst, 1e-4) << prim.name;
}

INSTANTIATE_TEST_SUITE_P(All, PrimitiveGradients,
                         ::testing::Range<std::size_t>(0, primitives().size()),
                         [](const auto& info) { return primitives()[info.param].name; });

TEST(Autodiff, IdenticalTapesAreBitIdentical) {
  auto run = [] {
    Tape t;
    Var a = t.leaf(uniform(6, 5, -3, 3, 42));
    Var b = t.leaf(uniform(5, 6, -3, 3, 43));
    Var loss = ad::logmeanexp(ad::matmul(a, b)) - ad::mean(ad::softplus(a));
    t.backward(loss);
    return std::pair{loss.scalar(), Matrix(a.grad())};
  };
  const auto [l1, g1] = run();
  const auto [l2, g2] = run();
  EXPECT_EQ(l1, l2);
  EXPECT_TRUE(g1.isApprox(g2, 0.0));
}
