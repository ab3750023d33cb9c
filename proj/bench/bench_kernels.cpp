// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include "hetfuse/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace k = hetfuse::kernels;

namespace {

k::Matrix gaussian(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  k::Matrix m(rows, cols);
  for (auto& v : m.reshaped()) v = n(rng);
  return m;
}

template <auto Fn>
void dense(benchmark::State& state) {
  const auto rows = state.range(0);
  const k::Matrix in = gaussian(rows, 256, 1);
  const k::RowMatrix w = gaussian(128, 256, 2);
  const k::Vector b = gaussian(128, 1, 3);
  const k::Vector empty;
  const k::DenseLayerView layer{w, b, empty, empty, k::Activation::tanh};
  k::Matrix out(rows, 128);
  for (auto _ : state) {
    Fn(in, layer, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}

template <auto Fn>
void hampel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::Matrix x = gaussian(static_cast<Eigen::Index>(n), 1, 4);
  std::vector<double> out(n);
  for (auto _ : state) {
    Fn(std::span<const double>(x.data(), n), 33, 3.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <auto Fn>
void windowize(benchmark::State& state) {
  const auto t = state.range(0);
  const k::Matrix samples = gaussian(t, 8, 5);
  const k::WindowSpec spec{128, 32};
  k::Matrix out(static_cast<Eigen::Index>(k::window_count(static_cast<std::size_t>(t), spec)), 128 * 8);
  for (auto _ : state) {
    Fn(samples, spec, out, 0);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * out.rows());
}

template <auto Fn>
void diagonal_average(benchmark::State& state) {
  const auto n = state.range(0);
  const Eigen::Index L = 64, K = n - L + 1;
  const k::Matrix u = gaussian(L, L, 6), v = gaussian(K, L, 7);
  const k::Vector sigma = gaussian(L, 1, 8).cwiseAbs();
  k::Matrix comps(n, L);
  for (auto _ : state) {
    Fn(u, sigma, v, comps);
    benchmark::DoNotOptimize(comps.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(dense<k::serial::dense_layer>)->Name("dense_layer/serial")->Arg(256)->Arg(4096);
BENCHMARK(dense<k::omp::dense_layer>)->Name("dense_layer/omp")->Arg(256)->Arg(4096)->UseRealTime();
BENCHMARK(hampel<k::serial::hampel>)->Name("hampel/serial")->Arg(1 << 14)->Arg(1 << 17);
BENCHMARK(hampel<k::omp::hampel>)->Name("hampel/omp")->Arg(1 << 14)->Arg(1 << 17)->UseRealTime();
BENCHMARK(windowize<k::serial::windowize>)->Name("windowize/serial")->Arg(1 << 12)->Arg(1 << 15);
BENCHMARK(windowize<k::omp::windowize>)->Name("windowize/omp")->Arg(1 << 12)->Arg(1 << 15)->UseRealTime();
BENCHMARK(diagonal_average<k::serial::diagonal_average>)->Name("diagonal_average/serial")->Arg(512)->Arg(2048);
BENCHMARK(diagonal_average<k::omp::diagonal_average>)->Name("diagonal_average/omp")->Arg(512)->Arg(2048)->UseRealTime();

BENCHMARK_MAIN();
