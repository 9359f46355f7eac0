#include <benchmark/benchmark.h>

#include <random>

#include "npmle/analysis.hpp"
#include "npmle/density.hpp"
#include "npmle/npmle.hpp"

using namespace npmle;

namespace {

const KernelSpec kGauss = KernelSpec::gaussian(-1, 1);
const KernelSpec kPois = KernelSpec::poisson(0.5, 4);
const DiscreteMixing kG2({{-0.5}, {0.5}}, {0.6, 0.4});
const DiscreteMixing kP2({{1.0}, {3.0}}, {0.5, 0.5});

DiscreteMixing random_mixing(std::mt19937_64& rng, int atoms, int d) {
  std::uniform_real_distribution<double> u(-1, 1), w(0.05, 1);
  std::vector<Point> a(atoms, Point(d));
  std::vector<double> ws(atoms);
  double tot = 0;
  for (int j = 0; j < atoms; ++j) {
    for (double& v : a[j]) v = u(rng);
    tot += ws[j] = w(rng);
  }
  for (double& v : ws) v /= tot;
  return DiscreteMixing(a, ws);
}

void BM_SolveGaussian(benchmark::State& state) {
  const Dataset data = sample(kG2, kGauss, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(solve(data, kGauss).g);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SolveGaussian)
    ->Arg(250)->Arg(500)->Arg(1000)->Arg(2000)->Arg(4000)->Arg(8000)
    ->Unit(benchmark::kMillisecond)
    ->Complexity();

void BM_SolvePoisson(benchmark::State& state) {
  const Dataset data = sample(kP2, kPois, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(solve(data, kPois).g);
}
BENCHMARK(BM_SolvePoisson)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_Solve2D(benchmark::State& state) {
  const KernelSpec k{2, 2, {-1, -1}, {1, 1}};
  const DiscreteMixing g({{-0.5, 0.0}, {0.5, 0.5}}, {0.5, 0.5});
  const Dataset data = sample(g, k, 1000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(solve(data, k).g);
}
BENCHMARK(BM_Solve2D)->Unit(benchmark::kMillisecond);

void BM_ChiSquare(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const DiscreteMixing g = random_mixing(rng, static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(chi_square(g, kG2, kGauss));
}
BENCHMARK(BM_ChiSquare)->Arg(2)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_PosteriorMeanMse(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const DiscreteMixing g = random_mixing(rng, 8, 1);
  for (auto _ : state) benchmark::DoNotOptimize(posterior_mean_mse(g, kG2, kGauss));
}
BENCHMARK(BM_PosteriorMeanMse)->Unit(benchmark::kMicrosecond);

void BM_Wasserstein(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const int d = static_cast<int>(state.range(0));
  const int atoms = static_cast<int>(state.range(1));
  const DiscreteMixing a = random_mixing(rng, atoms, d), b = random_mixing(rng, atoms, d);
  for (auto _ : state) benchmark::DoNotOptimize(wasserstein1(a, b));
}
BENCHMARK(BM_Wasserstein)->Args({1, 200})->Args({2, 50})->Args({2, 200})->Args({3, 200})->Unit(benchmark::kMicrosecond);

void BM_SubmodelDesign(benchmark::State& state) {
  const MixingDescriptor g0{true, {}, UniformBox{{-1}, {1}}};
  const DiscreteMixing disc = g0.as_discrete();
  const OrthoBasis basis = orthonormal_basis(disc, 8);
  const Dataset data = sample(g0, kGauss, 5000, 5);
  for (auto _ : state) benchmark::DoNotOptimize(submodel_design(data, disc, kGauss, basis).h);
}
BENCHMARK(BM_SubmodelDesign)->Unit(benchmark::kMillisecond);

void BM_SubmodelSolve(benchmark::State& state) {
  const MixingDescriptor g0{true, {}, UniformBox{{-1}, {1}}};
  const DiscreteMixing disc = g0.as_discrete();
  const int K = static_cast<int>(state.range(0));
  const OrthoBasis basis = orthonormal_basis(disc, K);
  const SubmodelDesign des = submodel_design(sample(g0, kGauss, 5000, 6), disc, kGauss, basis);
  for (auto _ : state) benchmark::DoNotOptimize(solve_submodel(des, disc, basis).loglik);
}
BENCHMARK(BM_SubmodelSolve)->Arg(1)->Arg(3)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ScoreCoefficients(benchmark::State& state) {
  std::mt19937_64 rng(7);
  const DiscreteMixing g = random_mixing(rng, 4, 1);
  const Point th0 = default_theta0(kG2);
  for (auto _ : state) benchmark::DoNotOptimize(score_coefficients(g, kG2, kGauss, th0).chi);
}
BENCHMARK(BM_ScoreCoefficients)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
