#include "lgnmt/evaluate.hpp"

#include <algorithm>

#include "lgnmt/errors.hpp"

namespace lgnmt {

template <class Real>
std::size_t argmax(const Real* values, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

template std::size_t argmax<float>(const float*, std::size_t);
template std::size_t argmax<double>(const double*, std::size_t);

template <class Real>
std::vector<IdSequence> greedy_decode_batch(const Model<Real>& model, const std::vector<IdSequence>& sources,
                                            std::size_t max_len) {
  std::vector<IdSequence> outputs(sources.size());
  if (sources.empty() || max_len == 0) return outputs;
  const std::size_t model_len = model.config().max_len;
  max_len = std::min(max_len, model_len);
  auto& mutable_model = const_cast<Model<Real>&>(model);  // non-recording tapes only read parameters

  const TokenBatch src = make_source_batch(sources);
  Tensor<Real> memory;
  {
    Tape<Real> tape(false);
    memory = encode(mutable_model, tape, src).value();
  }

  const std::size_t B = sources.size();
  const std::size_t V = model.config().tgt_vocab_size;
  std::vector<IdSequence> prefixes(B, IdSequence{Vocabulary::bos_id});
  std::vector<bool> done(B, false);
  std::size_t remaining = B;

  for (std::size_t step = 0; step < max_len && remaining > 0; ++step) {
    TokenBatch tgt = TokenBatch::from_sequences(prefixes, Vocabulary::pad_id);
    Tape<Real> tape(false);
    Var<Real> mem = tape.reference(memory);
    const Tensor<Real>& logits = decode(mutable_model, tape, mem, src.lengths, tgt).value();
    const std::size_t T = tgt.length;
    for (std::size_t b = 0; b < B; ++b) {
      const Real* row = logits.data() + (b * T + (T - 1)) * V;
      const auto next = static_cast<std::int32_t>(argmax(row, V));
      prefixes[b].push_back(next);
      if (done[b]) continue;
      if (next == Vocabulary::eos_id) {
        done[b] = true;
        --remaining;
      } else {
        outputs[b].push_back(next);
      }
    }
    // The decoder input may not grow past the model's positional table.
    if (prefixes.front().size() > model_len) break;
  }
  for (auto& out : outputs) {
    std::erase(out, Vocabulary::bos_id);
  }
  return outputs;
}

std::size_t decode_limit(std::size_t source_len, std::size_t model_max_len) {
  return std::min(model_max_len, 2 * source_len + 10);
}

template <class Real>
IdSequence greedy_decode(const Model<Real>& model, const IdSequence& source, std::size_t max_len) {
  return greedy_decode_batch(model, std::vector<IdSequence>{source}, max_len).front();
}

template std::vector<IdSequence> greedy_decode_batch(const Model<float>&, const std::vector<IdSequence>&, std::size_t);
template std::vector<IdSequence> greedy_decode_batch(const Model<double>&, const std::vector<IdSequence>&,
                                                     std::size_t);
template IdSequence greedy_decode(const Model<float>&, const IdSequence&, std::size_t);
template IdSequence greedy_decode(const Model<double>&, const IdSequence&, std::size_t);

template <class Real>
Evaluation evaluate_model(const Model<Real>& model, const Corpus& test, const SubwordCodec& source,
                          const SubwordCodec& target, std::size_t batch_size) {
  const auto& cfg = model.config();
  if (source.vocab.size() != cfg.src_vocab_size || target.vocab.size() != cfg.tgt_vocab_size) {
    throw ConfigError("vocabulary sizes (" + std::to_string(source.vocab.size()) + ", " +
                      std::to_string(target.vocab.size()) + ") do not match the model (" +
                      std::to_string(cfg.src_vocab_size) + ", " + std::to_string(cfg.tgt_vocab_size) + ")");
  }
  if (batch_size == 0) batch_size = 1;

  BpeEncoder encoder(source.bpe);
  std::vector<IdSequence> sources;
  sources.reserve(test.size());
  for (const auto& pair : test.pairs) {
    IdSequence ids = encoder.encode_ids(source.vocab, pair.src);
    // Leave room for eos within the positional table.
    if (ids.size() + 1 > cfg.max_len) ids.resize(cfg.max_len - 1);
    sources.push_back(std::move(ids));
  }

  Evaluation eval;
  std::vector<TokenSequence> hyps;
  std::vector<TokenSequence> refs;
  for (std::size_t start = 0; start < sources.size(); start += batch_size) {
    const std::size_t end = std::min(sources.size(), start + batch_size);
    std::vector<IdSequence> chunk(sources.begin() + static_cast<std::ptrdiff_t>(start),
                                  sources.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t longest = 0;
    for (const auto& ids : chunk) longest = std::max(longest, ids.size());
    const auto decoded = greedy_decode_batch(model, chunk, decode_limit(longest, cfg.max_len));
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      const auto& pair = test.pairs[start + i];
      TokenSequence hyp = ids_to_words(target.vocab, decoded[i]);
      TokenSequence ref = tokenize(pair.tgt);
      std::string joined;
      for (const auto& w : hyp) {
        if (!joined.empty()) joined.push_back(' ');
        joined += w;
      }
      eval.translations.push_back({pair.src, pair.tgt, std::move(joined)});
      hyps.push_back(std::move(hyp));
      refs.push_back(std::move(ref));
    }
  }
  eval.bleu = bleu_corpus(hyps, refs);
  return eval;
}

template Evaluation evaluate_model(const Model<float>&, const Corpus&, const SubwordCodec&, const SubwordCodec&,
                                   std::size_t);
template Evaluation evaluate_model(const Model<double>&, const Corpus&, const SubwordCodec&, const SubwordCodec&,
                                   std::size_t);

std::string translations_tsv(const std::vector<TranslationRow>& rows) {
  auto clean = [](const std::string& s) {
    std::string out = s;
    for (char& c : out) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    return out;
  };
  std::string out;
  for (const auto& r : rows) {
    out += clean(r.src) + "\t" + clean(r.ref) + "\t" + clean(r.hyp) + "\n";
  }
  return out;
}

}  // namespace lgnmt
