#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "milab/critic.hpp"
#include "milab/error.hpp"
#include "milab/optimizer.hpp"
#include "milab/trainer.hpp"
#include "support.hpp"

using milab::Critic;
using milab::CriticKind;
using milab::Matrix;
using milab::MlpSpec;
using milab::testing::uniform;

namespace {

std::vector<int> layer_widths(const Critic& c) {
  std::vector<int> w;
  for (const auto& p : c.parameters()) {
    if (p.name.ends_with(".weight")) {
      if (w.empty()) w.push_back(static_cast<int>(p.value.rows()));
      w.push_back(static_cast<int>(p.value.cols()));
    }
  }
  return w;
}

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST(Critic, OneHotTaskArchitecture) {
  milab::TaskSpec task;
  task.kind = milab::TaskSpec::Kind::kOneHot;
  task.classes = 16;
  milab::CriticConfig cfg;
  cfg.hidden = {256};
  const Critic c = Critic::build(milab::critic_spec_for(task, cfg, 1), CriticKind::kConcat);
  EXPECT_EQ(layer_widths(c), (std::vector<int>{32, 256, 1}));
  // The output layer carries no bias.
  EXPECT_EQ(c.parameters().back().name, "layer1.weight");
}

TEST(Critic, GaussianTaskArchitecture) {
  milab::TaskSpec task;
  task.kind = milab::TaskSpec::Kind::kGaussian;
  task.dim = 20;
  const Critic c = Critic::build(milab::critic_spec_for(task, {}, 1), CriticKind::kConcat);
  EXPECT_EQ(layer_widths(c), (std::vector<int>{40, 256, 256, 1}));
}

TEST(Critic, InitializationIsDeterministicAndFanInBounded) {
  const MlpSpec spec{{6, 8, 1}, milab::OutputActivation::kNone, 17, 0};
  const Critic a = Critic::build(spec, CriticKind::kConcat);
  const Critic b = Critic::build(spec, CriticKind::kConcat);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    EXPECT_TRUE(a.parameters()[k].value == b.parameters()[k].value);
  }
  EXPECT_LE(a.parameters()[0].value.cwiseAbs().maxCoeff(), std::sqrt(1.0 / 6));
  EXPECT_LE(a.parameters()[2].value.cwiseAbs().maxCoeff(), std::sqrt(1.0 / 8));
  EXPECT_TRUE(a.parameters()[1].value.isZero(0.0));
  const Critic c = Critic::build({{6, 8, 1}, milab::OutputActivation::kNone, 18, 0},
                                 CriticKind::kConcat);
  EXPECT_FALSE(a.parameters()[0].value == c.parameters()[0].value);
}

TEST(Critic, InvalidWidthsAreRejected) {
  EXPECT_THROW(Critic::build({{4}, {}, 0, 0}, CriticKind::kConcat), milab::Error);
  EXPECT_THROW(Critic::build({{4, 0, 1}, {}, 0, 0}, CriticKind::kConcat), milab::Error);
  EXPECT_THROW(Critic::build({{4, 8, 2}, {}, 0, 0}, CriticKind::kConcat), milab::Error);
  EXPECT_THROW(Critic::build({{4, 8, 1}, {}, 0, 4}, CriticKind::kConcat), milab::Error);
}

TEST(Critic, SeparableIdentityEmbedderIsOuterProduct) {
  Critic c = Critic::build({{1, 1}, {}, 0, 0}, CriticKind::kSeparable);
  c.parameters()[0].value(0, 0) = 1.0;
  const Matrix s = c.score_matrix(col({1, 2}), col({1, 2}));
  Matrix expect(2, 2);
  expect << 1, 2, 2, 4;
  EXPECT_TRUE(s == expect);
}

TEST(Critic, OneHotLabelOrthogonalScoresZero) {
  Critic c = Critic::build({{2, 2}, {}, 0, 0}, CriticKind::kOneHotLabel);
  c.parameters()[0].value = Matrix::Identity(2, 2);
  Matrix x(1, 2), y(1, 2);
  x << 1, 0;
  y << 0, 1;
  EXPECT_EQ(c.score_matrix(x, y)(0, 0), 0.0);
}

TEST(Critic, ConcatScoresMatchDirectEvaluation) {
  const Critic c = Critic::build({{6, 5, 4, 1}, {}, 3, 0}, CriticKind::kConcat);
  const Matrix xs = uniform(4, 3, -2, 2, 1);
  const Matrix ys = uniform(5, 3, -2, 2, 2);
  const Matrix s = c.score_matrix(xs, ys);
  ASSERT_EQ(s.rows(), 4);
  ASSERT_EQ(s.cols(), 5);
  const auto& p = c.parameters();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 5; ++j) {
      Eigen::RowVectorXd in(6);
      in << xs.row(i), ys.row(j);
      Eigen::RowVectorXd h = (in * p[0].value + p[1].value).cwiseMax(0.0);
      h = (h * p[2].value + p[3].value).cwiseMax(0.0);
      EXPECT_NEAR(s(i, j), (h * p[4].value)(0, 0), 1e-12);
    }
  }
}

TEST(Critic, BilinearScoresMatchDotProducts) {
  Critic sep = Critic::build({{3, 7, 4}, {}, 4, 0}, CriticKind::kSeparable);
  for (auto& p : sep.parameters()) {
    if (p.name.ends_with(".bias")) p.value = uniform(1, p.value.cols(), -0.5, 0.5, 9);
  }
  const Matrix x1 = uniform(5, 3, -1, 1, 5);
  const Matrix x2 = uniform(6, 3, -1, 1, 6);
  const Matrix s = sep.score_matrix(x1, x2);
  const Matrix f1 = sep.embed(x1);
  const Matrix f2 = sep.embed(x2);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 6; ++j) EXPECT_EQ(s(i, j), f1.row(i).dot(f2.row(j)));
  }

  const Critic lab = Critic::build({{3, 7, 4}, {}, 8, 0}, CriticKind::kOneHotLabel);
  const Matrix y = Matrix::Identity(4, 4);
  const Matrix sl = lab.score_matrix(x1, y);
  const Matrix fl = lab.embed(x1);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_EQ(sl(i, j), fl.row(i).dot(y.row(j)));
  }
}

TEST(Critic, OutputShiftMovesEveryScoreByTheConstant) {
  Critic c = Critic::build({{4, 8, 1}, {}, 3, 0}, CriticKind::kConcat);
  const Matrix xs = uniform(6, 2, -1, 1, 3);
  const Matrix ys = uniform(6, 2, -1, 1, 4);
  const Matrix before = c.score_matrix(xs, ys);
  c.shift_output(2.5);
  const Matrix after = c.score_matrix(xs, ys);
  EXPECT_TRUE(after == (before.array() + 2.5).matrix());
}

TEST(Critic, SoftplusOutputIsPositive) {
  const Critic c = Critic::build({{4, 8, 1}, milab::OutputActivation::kSoftplus, 3, 0},
                                 CriticKind::kConcat);
  EXPECT_GT(c.score_matrix(uniform(5, 2, -3, 3, 1), uniform(5, 2, -3, 3, 2)).minCoeff(), 0.0);
}

TEST(Critic, ShapeErrors) {
  const Critic c = Critic::build({{4, 8, 1}, {}, 3, 0}, CriticKind::kConcat);
  EXPECT_THROW(c.score_matrix(uniform(3, 3, 0, 1, 1), uniform(3, 1, 0, 1, 2)), milab::Error);
  EXPECT_THROW(c.embed(uniform(3, 2, 0, 1, 1)), milab::Error);
}

TEST(Critic, CheckpointRoundTrip) {
  Critic c = Critic::build({{6, 5, 1}, milab::OutputActivation::kSoftplus, 11, 2},
                           CriticKind::kConcat);
  c.shift_output(-0.75);
  std::stringstream ss;
  milab::save_checkpoint(c, ss);
  const Critic back = milab::load_checkpoint(ss);
  EXPECT_EQ(back.kind(), c.kind());
  EXPECT_EQ(back.x_dim(), 2);
  EXPECT_EQ(back.output_offset(), -0.75);
  EXPECT_EQ(back.spec().output, milab::OutputActivation::kSoftplus);
  ASSERT_EQ(back.parameters().size(), c.parameters().size());
  for (std::size_t k = 0; k < c.parameters().size(); ++k) {
    EXPECT_EQ(back.parameters()[k].name, c.parameters()[k].name);
    EXPECT_TRUE(back.parameters()[k].value == c.parameters()[k].value);
  }
  const Matrix xs = uniform(3, 2, -1, 1, 1), ys = uniform(3, 4, -1, 1, 2);
  EXPECT_TRUE(back.score_matrix(xs, ys) == c.score_matrix(xs, ys));
}

TEST(Critic, CheckpointKeyOrder) {
  const Critic c = Critic::build({{2, 1}, {}, 1, 0}, CriticKind::kConcat);
  std::stringstream ss;
  milab::save_checkpoint(c, ss);
  const std::string text = ss.str();
  std::size_t last = 0;
  for (const char* key : {"\"kind\"", "\"widths\"", "\"output\"", "\"x_dim\"", "\"output_offset\"",
                          "\"parameters\"", "\"name\"", "\"shape\"", "\"values\""}) {
    const std::size_t at = text.find(key);
    ASSERT_NE(at, std::string::npos) << key;
    EXPECT_GT(at, last) << key;
    last = at;
  }
}

TEST(Critic, CheckpointRejectsMalformedInput) {
  std::stringstream bad("{\"kind\": \"concat\"");
  EXPECT_THROW(milab::load_checkpoint(bad), milab::Error);
}

TEST(Optimizer, SgdSingleStepAscends) {
  milab::Optimizer opt(milab::OptimizerSpec::sgd(0.1));
  std::vector<Matrix> p{Matrix::Zero(1, 1)};
  ASSERT_TRUE(opt.step(p, {Matrix::Ones(1, 1)}));
  EXPECT_DOUBLE_EQ(p[0](0, 0), 0.1);
}

TEST(Optimizer, AdamZeroGradientLeavesParameters) {
  milab::Optimizer opt(milab::OptimizerSpec::adam());
  std::vector<Matrix> p{uniform(2, 3, -1, 1, 1)};
  const Matrix before = p[0];
  for (int k = 0; k < 3; ++k) ASSERT_TRUE(opt.step(p, {Matrix::Zero(2, 3)}));
  EXPECT_TRUE(p[0] == before);
}

TEST(Optimizer, AdamMatchesBiasCorrectedRecursion) {
  milab::Optimizer opt(milab::OptimizerSpec::adam(0.01));
  std::vector<Matrix> p{Matrix::Constant(1, 1, 0.5)};
  double theta = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 5; ++t) {
    const double g = std::sin(theta) + 0.1 * t;
    ASSERT_TRUE(opt.step(p, {Matrix::Constant(1, 1, g)}));
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta += 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p[0](0, 0), theta, 1e-15);
  }
}

TEST(Optimizer, NonFiniteGradientLeavesParameters) {
  milab::Optimizer opt(milab::OptimizerSpec::adam());
  std::vector<Matrix> p{Matrix::Ones(2, 2)};
  Matrix g = Matrix::Ones(2, 2);
  g(1, 0) = std::nan("");
  EXPECT_FALSE(opt.step(p, {g}));
  EXPECT_TRUE(p[0] == Matrix::Ones(2, 2));
  EXPECT_EQ(opt.steps_taken(), 0);
}

TEST(Optimizer, IdenticalRunsGiveIdenticalTrajectories) {
  auto run = [] {
    milab::Optimizer opt(milab::OptimizerSpec::adam());
    std::vector<Matrix> p{uniform(3, 3, -1, 1, 7)};
    for (int k = 0; k < 20; ++k) opt.step(p, {p[0].array().sin().matrix()});
    return p[0];
  };
  EXPECT_TRUE(run() == run());
}

TEST(Optimizer, SpecValidation) {
  EXPECT_THROW(milab::Optimizer(milab::OptimizerSpec::sgd(0.0)), milab::Error);
  milab::OptimizerSpec s = milab::OptimizerSpec::adam();
  s.beta1 = 1.0;
  EXPECT_THROW(milab::Optimizer{s}, milab::Error);
  s.beta1 = 0.9;
  s.beta2 = -0.1;
  EXPECT_THROW(milab::Optimizer{s}, milab::Error);
}
