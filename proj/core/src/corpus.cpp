#include "lgnmt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lgnmt/errors.hpp"
#include "lgnmt/random.hpp"
#include "lgnmt/unicode.hpp"

namespace lgnmt {

Origin Origin::parse(std::string_view text) {
  if (text == "corpus1") return corpus1();
  if (text == "corpus2") return corpus2();
  if (text == "corpus3") return corpus3();
  return other(std::string(text));
}

std::string Origin::str() const {
  switch (kind_) {
    case Kind::corpus1: return "corpus1";
    case Kind::corpus2: return "corpus2";
    case Kind::corpus3: return "corpus3";
    case Kind::other: break;
  }
  return label_;
}

void SplitSpec::validate() const {
  for (double f : {train_fraction, valid_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (std::abs(train_fraction + valid_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

namespace {

struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRecord> read_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  bool at_record_start = true;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(current));
    current = CsvRecord{};
    at_record_start = true;
  };

  while (i < n) {
    if (at_record_start) {
      // Blank lines between records are skipped.
      if (text[i] == '\n') { ++line; ++i; continue; }
      if (text[i] == '\r' && i + 1 < n && text[i + 1] == '\n') { ++line; i += 2; continue; }
      current.line = line;
      at_record_start = false;
    }
    const char c = text[i];
    if (c == '"' && field.empty()) {
      // Quoted field.
      const std::size_t start_line = line;
      ++i;
      for (;;) {
        if (i >= n) throw ParseError("unterminated quoted field", start_line);
        if (text[i] == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            field.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (text[i] == '\n') ++line;
        field.push_back(text[i]);
        ++i;
      }
      if (i < n && text[i] != ',' && text[i] != '\n' && !(text[i] == '\r' && i + 1 < n && text[i + 1] == '\n')) {
        throw ParseError("unexpected character after closing quote", line);
      }
      if (i >= n) break;
    }
    if (i >= n) break;
    const char d = text[i];
    if (d == ',') {
      end_field();
      ++i;
    } else if (d == '\n') {
      end_record();
      ++line;
      ++i;
    } else if (d == '\r' && i + 1 < n && text[i + 1] == '\n') {
      end_record();
      ++line;
      i += 2;
    } else if (d == '"') {
      throw ParseError("quote inside unquoted field", line);
    } else {
      field.push_back(d);
      ++i;
    }
  }
  if (!at_record_start) end_record();
  return records;
}

void check_utf8(const std::string& s, std::size_t line) {
  if (!unicode::is_valid_utf8(s)) throw ParseError("ill-formed UTF-8", line);
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char32_t cp : unicode::decode(text)) {
    if (unicode::is_whitespace(cp)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

// NFC, then collapse whitespace runs to one ASCII space and trim.
std::string normalize_text(std::string_view text) {
  const std::u32string cps = unicode::decode(unicode::nfc(text));
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    if (unicode::is_whitespace(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    unicode::append_utf8(out, cp);
  }
  return out;
}

struct PairKeyHash {
  std::size_t operator()(const std::pair<std::string, std::string>& p) const noexcept {
    const std::size_t h = std::hash<std::string>{}(p.first);
    return h ^ (std::hash<std::string>{}(p.second) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  }
};

}  // namespace

Corpus parse_csv_corpus(std::string_view text, std::string_view src_column, std::string_view tgt_column,
                        Origin origin, std::optional<Direction> direction) {
  const auto records = read_csv(text);
  if (records.empty()) throw SchemaError("CSV has no header row");
  const auto& header = records.front().fields;
  auto column_index = [&](std::string_view name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("CSV header has no column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t src_index = column_index(src_column);
  const std::size_t tgt_index = column_index(tgt_column);

  Corpus corpus;
  corpus.direction = direction.value_or(Direction{std::string(src_column), std::string(tgt_column)});
  corpus.pairs.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    }
    check_utf8(rec.fields[src_index], rec.line);
    check_utf8(rec.fields[tgt_index], rec.line);
    corpus.pairs.push_back(SentencePair{static_cast<std::int64_t>(r - 1), rec.fields[src_index],
                                        rec.fields[tgt_index], origin});
  }
  return corpus;
}

Corpus parse_json_corpus(std::string_view text, std::string_view src_key, std::string_view tgt_key, Origin origin,
                         std::optional<Direction> direction) {
  using nlohmann::json;
  std::vector<json> records;

  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text.starts_with("\xEF\xBB\xBF")) first = text.find_first_not_of(" \t\r\n", 3);

  if (first != std::string_view::npos && text[first] == '[') {
    json doc;
    try {
      doc = json::parse(text.substr(first));
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    for (auto& item : doc) records.push_back(std::move(item));
  } else if (first != std::string_view::npos) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      ++line_no;
      if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
      if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
        try {
          records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
          throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
      }
      if (end == text.size()) break;
      pos = end + 1;
    }
  }

  Corpus corpus;
  corpus.direction = direction.value_or(Direction{std::string(src_key), std::string(tgt_key)});
  corpus.pairs.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& rec = records[i];
    const std::string where = "record " + std::to_string(i);
    if (!rec.is_object()) throw SchemaError(where + ": not a JSON object");
    auto field = [&](std::string_view key) -> std::string {
      const auto it = rec.find(std::string(key));
      if (it == rec.end()) throw SchemaError(where + ": missing key '" + std::string(key) + "'");
      if (!it->is_string()) throw SchemaError(where + ": key '" + std::string(key) + "' is not a string");
      return it->get<std::string>();
    };
    std::string src = field(src_key);
    std::string tgt = field(tgt_key);
    corpus.pairs.push_back(SentencePair{static_cast<std::int64_t>(i), std::move(src), std::move(tgt), origin});
  }
  return corpus;
}

Corpus merge_corpora(const std::vector<Corpus>& corpora) {
  Corpus merged;
  if (corpora.empty()) return merged;
  merged.direction = corpora.front().direction;
  std::size_t total = 0;
  for (const auto& c : corpora) {
    if (c.direction != merged.direction) {
      throw SchemaError("cannot merge corpora with directions (" + merged.direction.src_lang + ", " +
                        merged.direction.tgt_lang + ") and (" + c.direction.src_lang + ", " +
                        c.direction.tgt_lang + ")");
    }
    total += c.size();
  }
  merged.pairs.reserve(total);
  std::int64_t next_id = 0;
  for (const auto& c : corpora) {
    for (const auto& p : c.pairs) {
      merged.pairs.push_back(SentencePair{next_id++, p.src, p.tgt, p.origin});
    }
  }
  return merged;
}

std::pair<Corpus, CleanReport> clean_corpus(const Corpus& corpus, std::size_t max_len_tokens) {
  CleanReport report;
  report.input_count = corpus.size();
  Corpus out;
  out.direction = corpus.direction;

  std::unordered_set<std::pair<std::string, std::string>, PairKeyHash> seen;
  for (const auto& pair : corpus.pairs) {
    std::string src = normalize_text(pair.src);
    std::string tgt = normalize_text(pair.tgt);
    if (src != pair.src || tgt != pair.tgt) ++report.normalized_whitespace;
    if (src.empty() || tgt.empty()) {
      ++report.dropped_empty;
      continue;
    }
    if (!seen.emplace(src, tgt).second) {
      ++report.dropped_duplicates;
      continue;
    }
    if (whitespace_token_count(src) > max_len_tokens || whitespace_token_count(tgt) > max_len_tokens) {
      ++report.dropped_too_long;
      continue;
    }
    out.pairs.push_back(SentencePair{pair.id, std::move(src), std::move(tgt), pair.origin});
  }
  report.output_count = out.size();
  return {std::move(out), report};
}

std::size_t split_portion(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

CorpusSplit split_corpus(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = corpus.size();
  if (n == 0) throw ConfigError("cannot split an empty corpus");
  if (n < 3 && spec.train_fraction > 0 && spec.valid_fraction > 0 && spec.test_fraction > 0) {
    throw ConfigError("corpus of " + std::to_string(n) + " pairs is too small for a three-way split");
  }
  const std::size_t n_test = split_portion(spec.test_fraction, n);
  const std::size_t n_valid = split_portion(spec.valid_fraction, n);
  if (n_test + n_valid > n) throw ConfigError("split fractions leave no room for the training portion");

  SplitMix64 rng(spec.seed);
  const std::vector<std::size_t> order = random_permutation(n, rng);

  // Which portion each position of the input goes to: 0 train, 1 valid, 2 test.
  std::vector<unsigned char> portion(n, 0);
  for (std::size_t k = 0; k < n_test; ++k) portion[order[k]] = 2;
  for (std::size_t k = n_test; k < n_test + n_valid; ++k) portion[order[k]] = 1;

  CorpusSplit out;
  out.train.direction = out.valid.direction = out.test.direction = corpus.direction;
  for (std::size_t i = 0; i < n; ++i) {
    Corpus& dst = portion[i] == 0 ? out.train : portion[i] == 1 ? out.valid : out.test;
    dst.pairs.push_back(corpus.pairs[i]);
  }
  return out;
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& p : corpus.pairs) {
    nlohmann::ordered_json rec;
    rec["id"] = p.id;
    rec["src"] = p.src;
    rec["tgt"] = p.tgt;
    rec["origin"] = p.origin.str();
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

Corpus from_jsonl(std::string_view text, Direction direction) {
  Corpus corpus;
  corpus.direction = std::move(direction);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    try {
      corpus.pairs.push_back(SentencePair{rec.at("id").get<std::int64_t>(), rec.at("src").get<std::string>(),
                                          rec.at("tgt").get<std::string>(),
                                          Origin::parse(rec.at("origin").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

std::string to_json(const CleanReport& r) {
  nlohmann::ordered_json j;
  j["input_count"] = r.input_count;
  j["output_count"] = r.output_count;
  j["dropped_empty"] = r.dropped_empty;
  j["dropped_duplicates"] = r.dropped_duplicates;
  j["dropped_too_long"] = r.dropped_too_long;
  j["normalized_whitespace"] = r.normalized_whitespace;
  return j.dump(2) + "\n";
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace lgnmt
