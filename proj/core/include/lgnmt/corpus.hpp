#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lgnmt {

// Where a pair came from: one of the three configured input corpora, or a
// free-form label.
class Origin {
 public:
  enum class Kind { corpus1, corpus2, corpus3, other };

  Origin() = default;
  static Origin corpus1() { return Origin(Kind::corpus1, {}); }
  static Origin corpus2() { return Origin(Kind::corpus2, {}); }
  static Origin corpus3() { return Origin(Kind::corpus3, {}); }
  static Origin other(std::string label) { return Origin(Kind::other, std::move(label)); }

  // "corpus1" | "corpus2" | "corpus3" map to the named kinds, any other
  // string becomes other(label).
  static Origin parse(std::string_view text);

  Kind kind() const noexcept { return kind_; }
  const std::string& label() const noexcept { return label_; }
  std::string str() const;

  friend bool operator==(const Origin&, const Origin&) = default;
  friend auto operator<=>(const Origin&, const Origin&) = default;

 private:
  Origin(Kind kind, std::string label) : kind_(kind), label_(std::move(label)) {}

  Kind kind_ = Kind::other;
  std::string label_;
};

struct SentencePair {
  std::int64_t id = 0;
  std::string src;
  std::string tgt;
  Origin origin;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct Direction {
  std::string src_lang;
  std::string tgt_lang;

  Direction reversed() const { return {tgt_lang, src_lang}; }
  friend bool operator==(const Direction&, const Direction&) = default;
};

struct Corpus {
  std::vector<SentencePair> pairs;
  Direction direction;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct SplitSpec {
  double train_fraction = 0.94;
  double valid_fraction = 0.03;
  double test_fraction = 0.03;
  std::uint64_t seed = 1;

  // Throws ConfigError unless each fraction is in [0, 1] and they sum to 1
  // (within 1e-9).
  void validate() const;
};

struct CleanReport {
  std::size_t input_count = 0;
  std::size_t output_count = 0;
  std::size_t dropped_empty = 0;
  std::size_t dropped_duplicates = 0;
  std::size_t dropped_too_long = 0;
  // Pairs where NFC or whitespace normalisation changed either side.
  std::size_t normalized_whitespace = 0;

  friend bool operator==(const CleanReport&, const CleanReport&) = default;
};

struct CorpusSplit {
  Corpus train;
  Corpus valid;
  Corpus test;
};

// RFC-4180 CSV with a header row. Accepts CRLF or LF record terminators and a
// leading UTF-8 BOM. The direction defaults to the two column names.
Corpus parse_csv_corpus(std::string_view text, std::string_view src_column, std::string_view tgt_column,
                        Origin origin = {}, std::optional<Direction> direction = std::nullopt);

// Either a top-level JSON array of objects or JSON-lines (one object per
// non-blank line). Keys other than the two requested are ignored.
Corpus parse_json_corpus(std::string_view text, std::string_view src_key, std::string_view tgt_key,
                         Origin origin = {}, std::optional<Direction> direction = std::nullopt);

Corpus merge_corpora(const std::vector<Corpus>& corpora);

std::pair<Corpus, CleanReport> clean_corpus(const Corpus& corpus, std::size_t max_len_tokens = 128);

CorpusSplit split_corpus(const Corpus& corpus, const SplitSpec& spec);

// Number of items given to a non-train portion: round-half-up of fraction * n.
std::size_t split_portion(double fraction, std::size_t n);

// Unified corpus file: one {"id","src","tgt","origin"} object per line, LF
// terminated. The direction is not stored in the file.
std::string to_jsonl(const Corpus& corpus);
Corpus from_jsonl(std::string_view text, Direction direction = {});

std::string to_json(const CleanReport& report);

// Helpers for CSV writing (used by fixtures and tools).
std::string csv_escape(std::string_view field);

}  // namespace lgnmt
