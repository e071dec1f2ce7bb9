#include <benchmark/benchmark.h>

#include "svr/dims.hpp"
#include "svr/linalg.hpp"
#include "svr/prune.hpp"
#include "svr/spectra.hpp"
#include "svr/stats.hpp"

namespace {

void BM_JacobiSvd(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  svr::Rng rng(1);
  const svr::Matrix m = svr::gaussian_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(svr::svd(m));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_JacobiSvd)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_ConvAdjacency(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  svr::Rng rng(2);
  const svr::Matrix u = svr::random_orthogonal(static_cast<Eigen::Index>(channels), rng);
  const svr::Matrix v = svr::random_orthogonal(static_cast<Eigen::Index>(channels * 9), rng)
                            .leftCols(static_cast<Eigen::Index>(channels));
  for (auto _ : state) benchmark::DoNotOptimize(svr::conv_adjacency(u, v, 3));
}
BENCHMARK(BM_ConvAdjacency)->Arg(16)->Arg(64)->Arg(128);

void BM_InternalDims(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  svr::Rng rng(3);
  const svr::Matrix a = svr::fc_adjacency(svr::random_orthogonal(n, rng), svr::random_orthogonal(n, rng));
  for (auto _ : state) benchmark::DoNotOptimize(svr::internal_dims(a, static_cast<std::size_t>(n)));
}
BENCHMARK(BM_InternalDims)->Arg(40)->Arg(160)->Arg(512);

void BM_Chi2QuantileUpper(benchmark::State& state) {
  const double dof = static_cast<double>(state.range(0));
  double q = 1e-3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(svr::chi2_quantile_upper(q, dof));
    q = q < 0.5 ? q * 1.01 : 1e-3;
  }
}
BENCHMARK(BM_Chi2QuantileUpper)->Arg(1)->Arg(9)->Arg(49);

void BM_KernelBlocks(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  svr::Rng rng(4);
  const svr::Matrix c = svr::cross_adjacency(svr::random_orthogonal(n, rng), svr::random_orthogonal(n, rng));
  const svr::Vector s = svr::Vector::LinSpaced(n, 1.0, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(svr::kernel_blocks(c, s, s));
}
BENCHMARK(BM_KernelBlocks)->Arg(16)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
