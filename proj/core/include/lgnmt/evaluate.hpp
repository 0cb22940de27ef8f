#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgnmt/bleu.hpp"
#include "lgnmt/corpus.hpp"
#include "lgnmt/subword.hpp"
#include "lgnmt/transformer.hpp"

namespace lgnmt {

using IdSequence = std::vector<std::int32_t>;

// Greedy decoding. Sources are raw id sequences (eos is appended here, as in
// training). Starting from bos, each step appends the argmax of the last
// position's logits, ties to the lowest id, until eos or max_len tokens. The
// result excludes bos and eos. Sentences are decoded together; padding is
// masked so each row matches decoding it alone.
template <class Real>
std::vector<IdSequence> greedy_decode_batch(const Model<Real>& model, const std::vector<IdSequence>& sources,
                                            std::size_t max_len);

template <class Real>
IdSequence greedy_decode(const Model<Real>& model, const IdSequence& source, std::size_t max_len);

// Decoding budget for a batch whose longest source has `source_len` ids:
// min(model_max_len, 2 * source_len + 10).
std::size_t decode_limit(std::size_t source_len, std::size_t model_max_len);

// Index of the largest value, first one on ties.
template <class Real>
std::size_t argmax(const Real* values, std::size_t n);

struct SubwordCodec {
  BpeModel bpe;
  Vocabulary vocab;
};

struct TranslationRow {
  std::string src;
  std::string ref;
  std::string hyp;  // space-joined word tokens
};

struct Evaluation {
  BleuResult bleu;
  std::vector<TranslationRow> translations;
};

// Decodes every source of `test` and scores against tokenize(tgt), with
// hypotheses converted back to word tokens (no detokenisation). Throws
// ConfigError when the codecs do not match the model's vocabulary sizes.
template <class Real>
Evaluation evaluate_model(const Model<Real>& model, const Corpus& test, const SubwordCodec& source,
                          const SubwordCodec& target, std::size_t batch_size = 32);

// TSV with columns src, ref, hyp; tabs and newlines inside text become spaces.
std::string translations_tsv(const std::vector<TranslationRow>& rows);

}  // namespace lgnmt
