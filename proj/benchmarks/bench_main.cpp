// Microbenchmarks for the hot paths: polar factors, optimizer steps, MLP gradients.

#include <benchmark/benchmark.h>

#include "mars/optimizers.hpp"
#include "mars/problems.hpp"
#include "mars/spectral.hpp"

using namespace mars;

namespace {

Matrix random_matrix(std::size_t m, std::size_t n) {
  RngStream rng(1);
  return Matrix(m, n, gauss_draw(rng, m * n).span());
}

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(svd(a));
}
BENCHMARK(BM_Svd)->Arg(8)->Arg(32)->Arg(64);

void BM_NewtonSchulz(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(polar_factor(a, PolarMethod::newton_schulz, 1e-7, 100));
}
BENCHMARK(BM_NewtonSchulz)->Arg(8)->Arg(32)->Arg(64);

void BM_OptimizerStep(benchmark::State& state) {
  const auto kind = static_cast<OptimizerKind>(state.range(0));
  const std::size_t d = 1024;
  Optimizer opt(kind, default_hyperparams(kind), ParamLayout::flat(d), Vector(d));
  RngStream rng(2);
  const Vector g = gauss_draw(rng, d), ref = gauss_draw(rng, d);
  const Vector* r = opt.needs_exact_reference() ? &ref : nullptr;
  for (auto _ : state) benchmark::DoNotOptimize(opt.step(g, r, 1e-3, 0.025));
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_OptimizerStep)
    ->Arg(static_cast<int>(OptimizerKind::adamw))
    ->Arg(static_cast<int>(OptimizerKind::mars_adamw))
    ->Arg(static_cast<int>(OptimizerKind::mars_lion));

void BM_MlpGradient(benchmark::State& state) {
  auto mlp = make_mlp({4, 16, 3}, 256, static_cast<std::size_t>(state.range(0)), 3);
  const Vector x = mlp->initial_point();
  const Batch b = mlp->sample_batch(1);
  for (auto _ : state) benchmark::DoNotOptimize(mlp->stochastic_grad(x, b));
}
BENCHMARK(BM_MlpGradient)->Arg(32)->Arg(256);

}  // namespace
BENCHMARK_MAIN();
