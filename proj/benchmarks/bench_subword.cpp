#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "lgnmt/random.hpp"
#include "lgnmt/subword.hpp"

namespace {

std::vector<std::string> make_sentences(std::size_t n) {
  lgnmt::SplitMix64 rng(7);
  const std::string letters = "abegiklmnostuwyz";
  std::vector<std::string> words;
  for (int i = 0; i < 500; ++i) {
    std::string w;
    for (std::size_t k = 0, len = 2 + rng.bounded(9); k < len; ++k) w += letters[rng.bounded(letters.size())];
    words.push_back(w);
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (std::size_t k = 0, len = 4 + rng.bounded(12); k < len; ++k) {
      // Squaring the draw skews toward frequent words.
      const double u = rng.uniform();
      s += words[static_cast<std::size_t>(u * u * static_cast<double>(words.size()))] + " ";
    }
    out.push_back(s + ".");
  }
  return out;
}

void BM_LearnBpe(benchmark::State& state) {
  const auto freqs = lgnmt::word_frequencies(make_sentences(2000));
  const auto merges = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(lgnmt::learn_bpe(freqs, merges));
}
BENCHMARK(BM_LearnBpe)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_EncodeCorpus(benchmark::State& state) {
  const auto sentences = make_sentences(2000);
  const auto bpe = lgnmt::learn_bpe(lgnmt::word_frequencies(sentences), 500);
  std::vector<std::string> symbols;
  for (const auto& s : sentences)
    for (const auto& t : lgnmt::tokenize(s))
      for (auto& sym : lgnmt::bpe_encode(bpe, t)) symbols.push_back(std::move(sym));
  const auto vocab = lgnmt::build_vocab(symbols, 1000);
  for (auto _ : state) {
    lgnmt::BpeEncoder encoder(bpe);
    std::size_t total = 0;
    for (const auto& s : sentences) total += encoder.encode_ids(vocab, s).size();
    benchmark::DoNotOptimize(total);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * sentences.size()));
}
BENCHMARK(BM_EncodeCorpus)->Unit(benchmark::kMillisecond);

}  // namespace
