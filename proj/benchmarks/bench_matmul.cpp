#include <benchmark/benchmark.h>

#include "lgnmt/random.hpp"
#include "lgnmt/tensor.hpp"

namespace {

lgnmt::Tensor<float> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  lgnmt::SplitMix64 rng(seed);
  lgnmt::Tensor<float> t({rows, cols});
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform() - 0.5);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(lgnmt::matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 512);

// Shapes of the output projection in a desk-scale model: [B*T, D] x [D, V].
void BM_OutputProjection(benchmark::State& state) {
  const auto a = random_matrix(64 * 24, 128, 3);
  const auto w = random_matrix(128, 350, 4);
  for (auto _ : state) benchmark::DoNotOptimize(lgnmt::matmul(a, w));
}
BENCHMARK(BM_OutputProjection);

}  // namespace
