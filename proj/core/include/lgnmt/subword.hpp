#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lgnmt {

inline constexpr std::string_view kEndOfWord = "</w>";

// Splits on Unicode whitespace, then peels leading and trailing punctuation
// (general category P) off each chunk, one code point per token. Case is kept.
std::vector<std::string> tokenize(std::string_view text);

// Joins with single spaces; punctuation-only tokens attach to the previous
// token without a space.
std::string detokenize(const std::vector<std::string>& tokens);

using SymbolPair = std::pair<std::string, std::string>;

class BpeModel {
 public:
  BpeModel() = default;
  // Throws ConfigError on a duplicate pair.
  explicit BpeModel(std::vector<SymbolPair> merges);

  const std::vector<SymbolPair>& merges() const noexcept { return merges_; }
  std::size_t size() const noexcept { return merges_.size(); }

  // Rank of a merge in learning order, or -1.
  std::ptrdiff_t rank(std::string_view a, std::string_view b) const;

  // Characters of `token` with "</w>" glued to the last one, then every merge
  // applied in learned order, each one exhaustively left to right.
  std::vector<std::string> encode(std::string_view token) const;

  // Merges file: "#lug-nmt-bpe v1" then one "A B" line per merge.
  std::string serialize() const;
  static BpeModel deserialize(std::string_view text);

  friend bool operator==(const BpeModel& a, const BpeModel& b) { return a.merges_ == b.merges_; }

 private:
  std::vector<SymbolPair> merges_;
  std::unordered_map<std::string, std::ptrdiff_t> ranks_;  // key: a + '\x1f' + b
};

// Greedy merge learning. Each word starts as its code points with "</w>" on
// the last one; every round merges the most frequent adjacent pair (counts
// weighted by word frequency, overlapping occurrences counted), ties going to
// the lexicographically smallest (a, b). Stops after num_merges rounds or
// when no pair occurs at least twice.
BpeModel learn_bpe(const std::map<std::string, std::int64_t>& word_frequencies, std::size_t num_merges);

std::vector<std::string> bpe_encode(const BpeModel& model, std::string_view token);

// Concatenates and strips one trailing "</w>"; throws ParseError without it.
std::string bpe_decode(const std::vector<std::string>& symbols);

// Word counts over the tokenized sentences.
std::map<std::string, std::int64_t> word_frequencies(const std::vector<std::string>& sentences);

class Vocabulary {
 public:
  static constexpr std::int32_t pad_id = 0;
  static constexpr std::int32_t unk_id = 1;
  static constexpr std::int32_t bos_id = 2;
  static constexpr std::int32_t eos_id = 3;
  static constexpr std::size_t num_specials = 4;

  Vocabulary();
  // Specials are prepended; tokens equal to a special name are rejected.
  explicit Vocabulary(const std::vector<std::string>& regular_tokens);

  std::size_t size() const noexcept { return id_to_token_.size(); }
  const std::string& token(std::int32_t id) const;
  std::int32_t id(std::string_view token) const;  // unk_id when absent
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }
  static bool is_special(std::int32_t id) noexcept { return id >= 0 && id < static_cast<std::int32_t>(num_specials); }

  // One token per line, line number = id.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.id_to_token_ == b.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
};

// Ranks symbols by descending frequency, ties lexicographic, keeps the top
// size_cap - 4 and prepends <pad> <unk> <bos> <eos>.
Vocabulary build_vocab(const std::vector<std::string>& symbols, std::size_t size_cap);
Vocabulary build_vocab(const std::map<std::string, std::int64_t>& symbol_counts, std::size_t size_cap);

// Tokenize, BPE-encode each token, map to ids (unk for OOV). No bos/eos.
std::vector<std::int32_t> encode_ids(const Vocabulary& vocab, const BpeModel& bpe, std::string_view sentence);

// Drops specials, joins symbols back into words at "</w>" boundaries. A
// trailing run without the marker is kept as a word.
std::vector<std::string> ids_to_words(const Vocabulary& vocab, const std::vector<std::int32_t>& ids);

// ids_to_words followed by detokenize. Throws RangeError on id >= |V|.
std::string decode_ids(const Vocabulary& vocab, const std::vector<std::int32_t>& ids);

// Memoising wrapper for encoding a whole corpus; not thread-safe.
class BpeEncoder {
 public:
  explicit BpeEncoder(const BpeModel& model) : model_(&model) {}
  const std::vector<std::string>& encode(const std::string& token);
  std::vector<std::int32_t> encode_ids(const Vocabulary& vocab, std::string_view sentence);

 private:
  const BpeModel* model_;
  std::unordered_map<std::string, std::vector<std::string>> cache_;
};

}  // namespace lgnmt
