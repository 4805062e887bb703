#include <benchmark/benchmark.h>

#include <vector>

#include "mfcov/estimators.hpp"
#include "mfcov/models.hpp"
#include "mfcov/spd.hpp"

namespace {

using namespace mfcov;

SpdMatrix random_spd(Index d, std::uint64_t seed) {
  RandomStream rng(seed);
  Matrix g(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = rng.normal();
  return SpdMatrix(Matrix(g * g.transpose() + Matrix::Identity(d, d)));
}

void BM_SpdLog(benchmark::State& state) {
  const Index d = state.range(0);
  const Matrix m = random_spd(d, 1).matrix();
  for (auto _ : state) {
    // Rebuilt each iteration so the cached spectrum is not reused.
    benchmark::DoNotOptimize(spd_log(SpdMatrix(m)));
  }
}
BENCHMARK(BM_SpdLog)->Arg(4)->Arg(10)->Arg(20)->Arg(50);

void BM_SymExp(benchmark::State& state) {
  const Index d = state.range(0);
  const SymmetricMatrix s = spd_log(random_spd(d, 2));
  for (auto _ : state) benchmark::DoNotOptimize(sym_exp(s));
}
BENCHMARK(BM_SymExp)->Arg(4)->Arg(10)->Arg(20)->Arg(50);

void BM_AffineInvariantDistance(benchmark::State& state) {
  const Index d = state.range(0);
  const Matrix a = random_spd(d, 3).matrix();
  const Matrix b = random_spd(d, 4).matrix();
  for (auto _ : state) benchmark::DoNotOptimize(dist_affine_invariant(SpdMatrix(a), SpdMatrix(b)));
}
BENCHMARK(BM_AffineInvariantDistance)->Arg(4)->Arg(10)->Arg(20);

CoupledSampleHierarchy motivating_hierarchy(std::int64_t n0) {
  const GaussianNoiseHierarchy model = gaussian_motivating_example();
  const std::vector<std::int64_t> n{n0, 16 * n0, 40 * n0, 160 * n0};
  return sample_hierarchy(model, n, 5);
}

void BM_EmfEstimate(benchmark::State& state) {
  const CoupledSampleHierarchy h = motivating_hierarchy(state.range(0));
  const std::vector<double> alphas{0.9, 0.7, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(emf_estimate(h, alphas, MeanMode::SampleMean));
}
BENCHMARK(BM_EmfEstimate)->Arg(12)->Arg(120);

void BM_LemfEstimate(benchmark::State& state) {
  const CoupledSampleHierarchy h = motivating_hierarchy(state.range(0));
  const std::vector<double> alphas{0.9, 0.7, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(lemf_estimate(h, alphas, MeanMode::SampleMean));
}
BENCHMARK(BM_LemfEstimate)->Arg(12)->Arg(120);

void BM_HeatSolve(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const std::vector<double> theta{0.3, -0.2, 0.1, 0.05};
  for (auto _ : state) benchmark::DoNotOptimize(solve_heat_fd(theta, m));
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_HeatSolve)->Arg(256)->Arg(4096)->Arg(65536);

void BM_HeatModelEvaluate(benchmark::State& state) {
  const HeatConduction1D model = HeatConduction1D::desk_preset();
  RandomStream rng(6);
  const Vector latent = model.draw_latent(rng);
  const std::size_t level = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(model.evaluate(latent, level));
}
BENCHMARK(BM_HeatModelEvaluate)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
