// Serial reference kernels against their OpenMP counterparts, plus the two
// SVT routes used by the ALM solver.
#include <benchmark/benchmark.h>

#include <random>

#include "crt/kernels.hpp"
#include "crt/norms_prox.hpp"

namespace {

crt::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  crt::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

template <crt::Matrix (*Kernel)(const crt::Matrix&, double)>
void BM_Elementwise(benchmark::State& state) {
  const auto m = random_matrix(state.range(0), state.range(1), 1);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(m, 0.5));
  state.SetItemsProcessed(state.iterations() * m.size());
}

template <crt::Matrix (*Kernel)(const crt::Matrix&, const crt::Matrix&)>
void BM_Distances(benchmark::State& state) {
  const auto train = random_matrix(state.range(0), state.range(1), 2);
  const auto queries = random_matrix(state.range(0), state.range(1) / 4, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(train, queries));
}

void BM_ProxNuclearFull(benchmark::State& state) {
  const Eigen::Index p = state.range(0), m = state.range(1);
  const auto z = random_matrix(p, m, 4);
  const crt::Matrix a = random_matrix(p, p, 5) * z * z.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(crt::prox_nuclear(a, 0.1));
}

void BM_ProxNuclearRowSpace(benchmark::State& state) {
  const Eigen::Index p = state.range(0), m = state.range(1);
  const auto z = random_matrix(p, m, 4);
  const crt::Matrix a = random_matrix(p, p, 5) * z * z.transpose();
  const crt::Matrix basis = crt::svd(z).u;
  for (auto _ : state) benchmark::DoNotOptimize(crt::prox_nuclear_in_row_space(a, basis, 0.1));
}

}  // namespace

BENCHMARK(BM_Elementwise<crt::kernels::serial::shrink_columns>)->Args({256, 2000});
BENCHMARK(BM_Elementwise<crt::kernels::omp::shrink_columns>)->Args({256, 2000});
BENCHMARK(BM_Elementwise<crt::kernels::serial::soft_threshold>)->Args({256, 2000});
BENCHMARK(BM_Elementwise<crt::kernels::omp::soft_threshold>)->Args({256, 2000});
BENCHMARK(BM_Distances<crt::kernels::serial::squared_distances>)->Args({644, 400});
BENCHMARK(BM_Distances<crt::kernels::omp::squared_distances>)->Args({644, 400});
BENCHMARK(BM_ProxNuclearFull)->Args({256, 48})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProxNuclearRowSpace)->Args({256, 48})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
