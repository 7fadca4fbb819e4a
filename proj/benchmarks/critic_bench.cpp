#include <random>

#include <benchmark/benchmark.h>

#include "milab/critic.hpp"
#include "milab/datasets.hpp"
#include "milab/estimators.hpp"

namespace {

milab::Matrix noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  milab::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Forward pass, MINE loss and backward pass of a concat critic on an N x N batch.
void BM_ConcatStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int dim = static_cast<int>(state.range(1));
  const int depth = static_cast<int>(state.range(2));
  milab::MlpSpec spec;
  spec.widths.push_back(2 * dim);
  for (int l = 0; l < depth; ++l) spec.widths.push_back(256);
  spec.widths.push_back(1);
  spec.seed = 1;
  const milab::Critic critic = milab::Critic::build(spec, milab::CriticKind::kConcat);
  const milab::Matrix xs = noise(n, dim, 2);
  const milab::Matrix ys = noise(n, dim, 3);
  milab::EstimatorSpec est;
  est.reg.lambda = 0.1;
  for (auto _ : state) {
    milab::ad::Tape tape;
    auto g = critic.forward(tape, xs, ys);
    auto loss = milab::build_loss(g.scores, est);
    tape.backward(loss.objective);
    benchmark::DoNotOptimize(g.params.front().grad().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
// One-hot task (batch 100, 16 classes, one hidden layer) and the Gaussian
// staircase (batch 64, d = 20, two hidden layers).
BENCHMARK(BM_ConcatStep)->Args({100, 16, 1})->Args({32, 16, 1})->Args({64, 20, 2})
    ->Unit(benchmark::kMillisecond);

void BM_SeparableStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  milab::MlpSpec spec;
  spec.widths = {16, 128, 32};
  spec.seed = 1;
  const milab::Critic critic = milab::Critic::build(spec, milab::CriticKind::kSeparable);
  const milab::Matrix xs = noise(n, 16, 2);
  const milab::Matrix ys = noise(n, 16, 3);
  milab::EstimatorSpec est;
  est.kind = milab::EstimatorKind::kInfoNce;
  for (auto _ : state) {
    milab::ad::Tape tape;
    auto g = critic.forward(tape, xs, ys);
    tape.backward(milab::build_loss(g.scores, est).objective);
    benchmark::DoNotOptimize(g.params.front().grad().data());
  }
}
BENCHMARK(BM_SeparableStep)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_SampleGaussian(benchmark::State& state) {
  milab::Task task = milab::GaussianTask(20, milab::staircase_schedule(20, {2, 4}, 100), 1);
  for (auto _ : state) benchmark::DoNotOptimize(milab::sample_joint(task, 64).xs.data());
}
BENCHMARK(BM_SampleGaussian);

}  // namespace
