#include <doctest.h>

#include "lgnmt/errors.hpp"
#include "lgnmt/evaluate.hpp"
#include "synthetic.hpp"

using namespace lgnmt;

namespace {

ModelConfig tiny(std::size_t src_vocab, std::size_t tgt_vocab) {
  ModelConfig c;
  c.dim_model = 8;
  c.dim_ff = 16;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 1;
  c.n_heads = 2;
  c.dropout_rate = 0.0;
  c.src_vocab_size = src_vocab;
  c.tgt_vocab_size = tgt_vocab;
  c.max_len = 12;
  return c;
}

Model<float> forced(std::int32_t id) {
  Model<float> m(tiny(10, 10), 1);
  auto& bias = m.parameters()[m.layout().out_b].value;
  bias[static_cast<std::size_t>(id)] = 1000.0f;
  return m;
}

SubwordCodec codec_for(const std::vector<std::string>& sentences, std::size_t merges) {
  SubwordCodec c;
  c.bpe = learn_bpe(word_frequencies(sentences), merges);
  std::vector<std::string> symbols;
  for (const auto& s : sentences)
    for (const auto& t : tokenize(s))
      for (auto& sym : bpe_encode(c.bpe, t)) symbols.push_back(std::move(sym));
  c.vocab = build_vocab(symbols, 1000);
  return c;
}

}  // namespace

TEST_SUITE("evaluate") {

TEST_CASE("argmax ties go to the lowest index") {
  const float v[] = {1, 3, 3, 2};
  CHECK(argmax(v, 4) == 1);
  const double w[] = {-1};
  CHECK(argmax(w, 1) == 0);
}

TEST_CASE("forced eos gives an empty sequence") {
  CHECK(greedy_decode(forced(Vocabulary::eos_id), {4, 5, 6}, 10).empty());
}

TEST_CASE("no eos runs to the cap") {
  const auto out = greedy_decode(forced(7), {4, 5}, 6);
  CHECK(out == IdSequence(6, 7));
  CHECK(greedy_decode(forced(7), {4}, 100).size() == 12);
  CHECK(greedy_decode(forced(7), {4}, 0).empty());
}

TEST_CASE("batched decoding matches one-by-one") {
  const Model<float> m(tiny(10, 10), 4);
  const std::vector<IdSequence> sources{{4, 5, 6, 7}, {8}, {9, 4}};
  const auto batch = greedy_decode_batch(m, sources, 9);
  for (std::size_t i = 0; i < sources.size(); ++i) CHECK(batch[i] == greedy_decode(m, sources[i], 9));
}

TEST_CASE("decode limit") {
  CHECK(decode_limit(3, 128) == 16);
  CHECK(decode_limit(100, 128) == 128);
}

TEST_CASE("evaluate_model") {
  const auto corpus = testing::synthetic_corpus(30, 2);
  std::vector<std::string> src, tgt;
  for (const auto& p : corpus.pairs) {
    src.push_back(p.src);
    tgt.push_back(p.tgt);
  }
  const auto sc = codec_for(src, 40);
  const auto tc = codec_for(tgt, 40);
  auto cfg = tiny(sc.vocab.size(), tc.vocab.size());
  cfg.max_len = 64;
  const Model<float> m(cfg, 3);
  const auto a = evaluate_model(m, corpus, sc, tc, 7);
  const auto b = evaluate_model(m, corpus, sc, tc, 7);
  CHECK(a.translations.size() == 30);
  CHECK(a.bleu.bleu == b.bleu.bleu);
  CHECK(a.bleu.hyp_length == b.bleu.hyp_length);
  CHECK(a.translations[4].ref == corpus.pairs[4].tgt);

  const Model<float> wrong(tiny(sc.vocab.size() + 1, tc.vocab.size()), 3);
  CHECK_THROWS_AS(evaluate_model(wrong, corpus, sc, tc), ConfigError);
}

TEST_CASE("translations tsv") {
  const auto tsv = translations_tsv({{"a\tb", "c\nd", "e"}});
  CHECK(tsv == "a b\tc d\te\n");
}

}  // TEST_SUITE
