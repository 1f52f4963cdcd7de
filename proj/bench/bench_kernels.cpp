// Serial reference vs OpenMP kernels. Run with SUPERAD_WORKERS unset; set
// OMP_NUM_THREADS to vary the thread count.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "superad/kernels.hpp"

namespace {

using namespace superad;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Matrix m{rows, cols, std::vector<float>(rows * cols)};
  for (auto& v : m.values) v = n(rng);
  return m;
}

// Args: queries, bank rows; dim fixed at 256.
template <auto Kernel>
void BM_NearestNeighbor(benchmark::State& state) {
  const auto q = random_matrix(state.range(0), 256, 1);
  const auto b = random_matrix(state.range(1), 256, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(q.view(), b.view()));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}
BENCHMARK(BM_NearestNeighbor<kernels::nn_cosine_distance_serial>)->Name("nn/serial")->Args({256, 2048})->Args({1024, 4096});
BENCHMARK(BM_NearestNeighbor<kernels::nn_cosine_distance_omp>)->Name("nn/omp")->Args({256, 2048})->Args({1024, 4096});

template <auto Kernel>
void BM_Covariance(benchmark::State& state) {
  const std::size_t n = state.range(0), d = state.range(1);
  const auto m = random_matrix(n, d, 3);
  std::vector<double> x(m.values.begin(), m.values.end());
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(x, n, d));
}
BENCHMARK(BM_Covariance<kernels::covariance_serial>)->Name("covariance/serial")->Args({2304, 64})->Args({2304, 256});
BENCHMARK(BM_Covariance<kernels::covariance_omp>)->Name("covariance/omp")->Args({2304, 64})->Args({2304, 256});

template <auto Kernel>
void BM_MinDistance(benchmark::State& state) {
  const auto m = random_matrix(state.range(0), 1024, 4);
  std::vector<double> dist(m.rows, 1e300);
  std::size_t center = 0;
  for (auto _ : state) {
    Kernel(m.view(), center, dist);
    center = (center + 17) % m.rows;
  }
}
BENCHMARK(BM_MinDistance<kernels::update_min_distance_serial>)->Name("min_distance/serial")->Arg(64)->Arg(4096);
BENCHMARK(BM_MinDistance<kernels::update_min_distance_omp>)->Name("min_distance/omp")->Arg(64)->Arg(4096);

template <auto Kernel>
void BM_Confusion(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::vector<unsigned char> pred(state.range(0)), gt(state.range(0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = rng() & 1;
    gt[i] = rng() % 7 == 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(pred, gt));
  state.SetBytesProcessed(state.iterations() * state.range(0) * 2);
}
BENCHMARK(BM_Confusion<kernels::count_confusion_serial>)->Name("confusion/serial")->Arg(1 << 20)->Arg(1 << 24);
BENCHMARK(BM_Confusion<kernels::count_confusion_omp>)->Name("confusion/omp")->Arg(1 << 20)->Arg(1 << 24);

}  // namespace

BENCHMARK_MAIN();
