#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace lgnmt {

using TokenSequence = std::vector<std::string>;

// Corpus-level BLEU-4, single reference, no smoothing.
struct BleuResult {
  double bleu = 0.0;                      // 0..100
  std::array<double, 4> precisions{};     // pooled clipped n-gram precision, 0..1
  std::array<std::size_t, 4> matches{};   // clipped matches per order
  std::array<std::size_t, 4> totals{};    // hypothesis n-grams per order
  double brevity_penalty = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

// Clipped n-gram counts are computed per sentence and pooled over the corpus;
// BP = exp(1 - r/c) when c < r. Any order with zero matches (or no
// hypothesis n-grams) gives bleu = 0. Throws ConfigError on an empty corpus or
// mismatched list lengths.
BleuResult bleu_corpus(const std::vector<TokenSequence>& hypotheses, const std::vector<TokenSequence>& references);

// {"bleu","p1".."p4","bp","hyp_len","ref_len"}, reals with six decimals.
std::string to_json(const BleuResult& result);

}  // namespace lgnmt
