// Serial reference vs OpenMP kernels. Thread count comes from --threads=N
// (parsed before google-benchmark sees argv) or OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include <cstdlib>
#include <cstring>
#include <string>

#include "hicle/kernels.hpp"
#include "hicle/rng.hpp"

using namespace hicle;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

template <Matrix (*Fn)(const Matrix&)>
void unary(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * 64));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void binary_nt(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 1);
  const Matrix b = random_matrix(n, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * 64));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void binary_nn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 1);
  const Matrix b = random_matrix(64, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void binary_tn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 1);
  const Matrix b = random_matrix(n, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
}

template <std::vector<double> (*Fn)(const Matrix&)>
void logsumexp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix s = random_matrix(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(s));
}

}  // namespace

BENCHMARK(unary<kernels::reference::gram>)->Name("gram/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(unary<kernels::gram>)->Name("gram/omp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(binary_nt<kernels::reference::matmul_nt>)->Name("matmul_nt/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(binary_nt<kernels::matmul_nt>)->Name("matmul_nt/omp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(binary_nn<kernels::reference::matmul_nn>)->Name("matmul_nn/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(binary_nn<kernels::matmul_nn>)->Name("matmul_nn/omp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(binary_tn<kernels::reference::matmul_tn>)->Name("matmul_tn/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(binary_tn<kernels::matmul_tn>)->Name("matmul_tn/omp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(logsumexp<kernels::reference::row_logsumexp_offdiag>)->Name("logsumexp/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(logsumexp<kernels::row_logsumexp_offdiag>)->Name("logsumexp/omp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(binary_nt<kernels::reference::pairwise_sq_dist>)->Name("sq_dist/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(binary_nt<kernels::pairwise_sq_dist>)->Name("sq_dist/omp")->RangeMultiplier(4)->Range(64, 1024);

int main(int argc, char** argv) {
  int kept = 1;
  for (int i = 1; i < argc; ++i) {
    if (std::strncmp(argv[i], "--threads=", 10) == 0) {
      kernels::set_threads(std::atoi(argv[i] + 10));
    } else {
      argv[kept++] = argv[i];
    }
  }
  argc = kept;
  benchmark::AddCustomContext("omp_threads", std::to_string(kernels::max_threads()));
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
