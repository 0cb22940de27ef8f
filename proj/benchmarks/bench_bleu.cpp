#include <benchmark/benchmark.h>

#include "lgnmt/bleu.hpp"
#include "lgnmt/random.hpp"

namespace {

void BM_CorpusBleu(benchmark::State& state) {
  lgnmt::SplitMix64 rng(3);
  std::vector<lgnmt::TokenSequence> hyps, refs;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    lgnmt::TokenSequence h, r;
    for (std::size_t k = 0, len = 8 + rng.bounded(20); k < len; ++k) r.push_back("w" + std::to_string(rng.bounded(300)));
    for (const auto& w : r) h.push_back(rng.bounded(4) == 0 ? "w" + std::to_string(rng.bounded(300)) : w);
    hyps.push_back(std::move(h));
    refs.push_back(std::move(r));
  }
  for (auto _ : state) benchmark::DoNotOptimize(lgnmt::bleu_corpus(hyps, refs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CorpusBleu)->Arg(100)->Arg(1232);

}  // namespace
