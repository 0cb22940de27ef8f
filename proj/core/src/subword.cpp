#include "lgnmt/subword.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "lgnmt/errors.hpp"
#include "lgnmt/unicode.hpp"

namespace lgnmt {

namespace {

constexpr std::string_view kMergesHeader = "#lug-nmt-bpe v1";
constexpr std::string_view kSpecialNames[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

std::string rank_key(std::string_view a, std::string_view b) {
  std::string key = std::to_string(a.size());
  key.push_back(':');
  key.append(a);
  key.append(b);
  return key;
}

bool is_punctuation_only(std::string_view token) {
  if (token.empty()) return false;
  for (char32_t cp : unicode::decode(token)) {
    if (!unicode::is_punctuation(cp)) return false;
  }
  return true;
}

std::vector<std::string> initial_symbols(std::string_view token) {
  std::vector<std::string> symbols = unicode::code_points(token);
  if (!symbols.empty()) symbols.back().append(kEndOfWord);
  return symbols;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  const std::u32string cps = unicode::decode(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    if (unicode::is_whitespace(cps[i])) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < cps.size() && !unicode::is_whitespace(cps[end])) ++end;

    std::size_t lo = i;
    std::size_t hi = end;
    while (lo < hi && unicode::is_punctuation(cps[lo])) {
      tokens.push_back(unicode::encode(std::u32string_view(&cps[lo], 1)));
      ++lo;
    }
    std::vector<std::string> trailing;
    while (hi > lo && unicode::is_punctuation(cps[hi - 1])) {
      trailing.push_back(unicode::encode(std::u32string_view(&cps[hi - 1], 1)));
      --hi;
    }
    if (lo < hi) tokens.push_back(unicode::encode(std::u32string_view(&cps[lo], hi - lo)));
    tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
    i = end;
  }
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& token : tokens) {
    if (!out.empty() && !is_punctuation_only(token)) out.push_back(' ');
    out += token;
  }
  return out;
}

BpeModel::BpeModel(std::vector<SymbolPair> merges) : merges_(std::move(merges)) {
  ranks_.reserve(merges_.size());
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& [a, b] = merges_[r];
    if (!ranks_.emplace(rank_key(a, b), static_cast<std::ptrdiff_t>(r)).second) {
      throw ConfigError("duplicate merge (" + a + ", " + b + ")");
    }
  }
}

std::ptrdiff_t BpeModel::rank(std::string_view a, std::string_view b) const {
  const auto it = ranks_.find(rank_key(a, b));
  return it == ranks_.end() ? -1 : it->second;
}

std::vector<std::string> BpeModel::encode(std::string_view token) const {
  std::vector<std::string> symbols = initial_symbols(token);
  // Applying merges in order is equivalent to repeatedly jumping to the
  // lowest-ranked merge not yet passed that matches some adjacent pair.
  std::ptrdiff_t next_rank = 0;
  while (symbols.size() > 1) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const std::ptrdiff_t r = rank(symbols[i], symbols[i + 1]);
      if (r >= next_rank && (best < 0 || r < best)) best = r;
    }
    if (best < 0) break;
    const auto& [a, b] = merges_[static_cast<std::size_t>(best)];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
        merged.push_back(a + b);
        ++i;
      } else {
        merged.push_back(std::move(symbols[i]));
      }
    }
    symbols = std::move(merged);
    next_rank = best + 1;
  }
  return symbols;
}

std::string BpeModel::serialize() const {
  std::string out(kMergesHeader);
  out.push_back('\n');
  for (const auto& [a, b] : merges_) {
    out += a;
    out.push_back(' ');
    out += b;
    out.push_back('\n');
  }
  return out;
}

BpeModel BpeModel::deserialize(std::string_view text) {
  std::vector<SymbolPair> merges;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (line.ends_with('\r')) line.remove_suffix(1);
    ++line_no;
    pos = end + 1;
    if (!saw_header) {
      if (line != kMergesHeader) throw ParseError("missing merges header '" + std::string(kMergesHeader) + "'", 1);
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    const std::size_t space = line.find(' ');
    if (space == std::string_view::npos || space == 0 || space + 1 >= line.size() ||
        line.find(' ', space + 1) != std::string_view::npos) {
      throw ParseError("expected two space-separated symbols", line_no);
    }
    merges.emplace_back(std::string(line.substr(0, space)), std::string(line.substr(space + 1)));
  }
  if (!saw_header) throw ParseError("missing merges header '" + std::string(kMergesHeader) + "'", 1);
  return BpeModel(std::move(merges));
}

BpeModel learn_bpe(const std::map<std::string, std::int64_t>& word_frequencies, std::size_t num_merges) {
  // Symbols are interned to ints; pair keys pack two ids.
  std::vector<std::string> symbol_text;
  std::unordered_map<std::string, std::uint32_t> symbol_id;
  auto intern = [&](const std::string& s) {
    const auto [it, inserted] = symbol_id.emplace(s, static_cast<std::uint32_t>(symbol_text.size()));
    if (inserted) symbol_text.push_back(s);
    return it->second;
  };
  auto pack = [](std::uint32_t a, std::uint32_t b) { return (static_cast<std::uint64_t>(a) << 32) | b; };

  std::vector<std::vector<std::uint32_t>> words;
  std::vector<std::int64_t> counts;
  for (const auto& [word, count] : word_frequencies) {
    if (word.empty() || count <= 0) continue;
    std::vector<std::uint32_t> seq;
    for (const auto& s : initial_symbols(word)) seq.push_back(intern(s));
    words.push_back(std::move(seq));
    counts.push_back(count);
  }

  std::unordered_map<std::uint64_t, std::int64_t> pair_count;
  std::unordered_map<std::uint64_t, std::unordered_set<std::size_t>> pair_words;

  struct Entry {
    std::int64_t count;
    std::uint32_t a;
    std::uint32_t b;
  };
  auto entry_less = [&](const Entry& x, const Entry& y) {
    if (x.count != y.count) return x.count > y.count;
    if (x.a != y.a) {
      const int c = symbol_text[x.a].compare(symbol_text[y.a]);
      if (c != 0) return c < 0;
    }
    return symbol_text[x.b] < symbol_text[y.b];
  };
  std::set<Entry, decltype(entry_less)> ranking(entry_less);

  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& seq = words[w];
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      const std::uint64_t key = pack(seq[i], seq[i + 1]);
      pair_count[key] += counts[w];
      pair_words[key].insert(w);
    }
  }
  for (const auto& [key, c] : pair_count) {
    ranking.insert(Entry{c, static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key)});
  }

  std::vector<SymbolPair> merges;
  merges.reserve(num_merges);
  std::unordered_set<std::uint64_t> touched;

  while (merges.size() < num_merges && !ranking.empty()) {
    const Entry best = *ranking.begin();
    if (best.count < 2) break;
    const std::uint32_t a = best.a;
    const std::uint32_t b = best.b;
    const std::uint64_t best_key = pack(a, b);
    const std::uint32_t merged = intern(symbol_text[a] + symbol_text[b]);
    merges.emplace_back(symbol_text[a], symbol_text[b]);

    touched.clear();
    auto adjust = [&](std::uint64_t key, std::int64_t delta) {
      if (touched.insert(key).second) {
        const auto it = pair_count.find(key);
        if (it != pair_count.end() && it->second > 0) {
          ranking.erase(Entry{it->second, static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key)});
        }
      }
      pair_count[key] += delta;
    };

    std::vector<std::size_t> affected(pair_words[best_key].begin(), pair_words[best_key].end());
    std::sort(affected.begin(), affected.end());
    for (std::size_t w : affected) {
      auto& seq = words[w];
      const std::int64_t c = counts[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        if (seq[i] == a && seq[i + 1] == b) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) adjust(pack(seq[i], seq[i + 1]), -c);
      std::vector<std::uint32_t> next;
      next.reserve(seq.size());
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i + 1 < seq.size() && seq[i] == a && seq[i + 1] == b) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(seq[i]);
        }
      }
      seq = std::move(next);
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        const std::uint64_t key = pack(seq[i], seq[i + 1]);
        adjust(key, c);
        pair_words[key].insert(w);
      }
    }
    for (std::uint64_t key : touched) {
      const std::int64_t c = pair_count[key];
      if (c > 0) ranking.insert(Entry{c, static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key)});
    }
  }
  return BpeModel(std::move(merges));
}

std::vector<std::string> bpe_encode(const BpeModel& model, std::string_view token) { return model.encode(token); }

std::string bpe_decode(const std::vector<std::string>& symbols) {
  std::string out;
  for (const auto& s : symbols) out += s;
  if (!out.ends_with(kEndOfWord)) throw ParseError("symbol stream has no trailing end-of-word marker");
  out.resize(out.size() - kEndOfWord.size());
  return out;
}

std::map<std::string, std::int64_t> word_frequencies(const std::vector<std::string>& sentences) {
  std::map<std::string, std::int64_t> freq;
  for (const auto& s : sentences) {
    for (auto& t : tokenize(s)) ++freq[std::move(t)];
  }
  return freq;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& regular_tokens) {
  id_to_token_.reserve(num_specials + regular_tokens.size());
  for (auto name : kSpecialNames) id_to_token_.emplace_back(name);
  id_to_token_.insert(id_to_token_.end(), regular_tokens.begin(), regular_tokens.end());
  token_to_id_.reserve(id_to_token_.size());
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<std::int32_t>(i)).second) {
      throw ConfigError("duplicate vocabulary token '" + id_to_token_[i] + "'");
    }
  }
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(id_to_token_.size()));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::int32_t Vocabulary::id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? unk_id : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.contains(std::string(token)); }

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : id_to_token_) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  if (lines.size() < num_specials) throw ParseError("vocabulary file shorter than the four special tokens");
  for (std::size_t i = 0; i < num_specials; ++i) {
    if (lines[i] != kSpecialNames[i]) {
      throw ParseError("expected '" + std::string(kSpecialNames[i]) + "'", i + 1);
    }
  }
  return Vocabulary(std::vector<std::string>(lines.begin() + num_specials, lines.end()));
}

Vocabulary build_vocab(const std::map<std::string, std::int64_t>& symbol_counts, std::size_t size_cap) {
  if (size_cap < Vocabulary::num_specials + 1) throw ConfigError("vocabulary size cap must be at least 5");
  std::vector<std::pair<std::string, std::int64_t>> ranked;
  ranked.reserve(symbol_counts.size());
  for (const auto& [s, c] : symbol_counts) {
    if (std::find(std::begin(kSpecialNames), std::end(kSpecialNames), s) != std::end(kSpecialNames)) continue;
    ranked.emplace_back(s, c);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  const std::size_t keep = std::min(ranked.size(), size_cap - Vocabulary::num_specials);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(tokens);
}

Vocabulary build_vocab(const std::vector<std::string>& symbols, std::size_t size_cap) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& s : symbols) ++counts[s];
  return build_vocab(counts, size_cap);
}

std::vector<std::int32_t> encode_ids(const Vocabulary& vocab, const BpeModel& bpe, std::string_view sentence) {
  std::vector<std::int32_t> ids;
  for (const auto& token : tokenize(sentence)) {
    for (const auto& symbol : bpe.encode(token)) ids.push_back(vocab.id(symbol));
  }
  return ids;
}

std::vector<std::string> ids_to_words(const Vocabulary& vocab, const std::vector<std::int32_t>& ids) {
  std::vector<std::string> words;
  std::string pending;
  for (std::int32_t id : ids) {
    const std::string& symbol = vocab.token(id);
    if (Vocabulary::is_special(id)) continue;
    pending += symbol;
    if (pending.ends_with(kEndOfWord)) {
      pending.resize(pending.size() - kEndOfWord.size());
      if (!pending.empty()) words.push_back(std::move(pending));
      pending.clear();
    }
  }
  if (!pending.empty()) words.push_back(std::move(pending));
  return words;
}

std::string decode_ids(const Vocabulary& vocab, const std::vector<std::int32_t>& ids) {
  return detokenize(ids_to_words(vocab, ids));
}

const std::vector<std::string>& BpeEncoder::encode(const std::string& token) {
  const auto it = cache_.find(token);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(token, model_->encode(token)).first->second;
}

std::vector<std::int32_t> BpeEncoder::encode_ids(const Vocabulary& vocab, std::string_view sentence) {
  std::vector<std::int32_t> ids;
  for (const auto& token : tokenize(sentence)) {
    for (const auto& symbol : encode(token)) ids.push_back(vocab.id(symbol));
  }
  return ids;
}

}  // namespace lgnmt
