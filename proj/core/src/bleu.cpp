#include "lgnmt/bleu.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "lgnmt/errors.hpp"

namespace lgnmt {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const TokenSequence& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

BleuResult bleu_corpus(const std::vector<TokenSequence>& hypotheses, const std::vector<TokenSequence>& references) {
  if (hypotheses.size() != references.size()) {
    throw ConfigError("BLEU needs one reference per hypothesis (" + std::to_string(hypotheses.size()) + " vs " +
                      std::to_string(references.size()) + ")");
  }
  if (hypotheses.empty()) throw ConfigError("BLEU of an empty corpus is undefined");

  BleuResult r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    r.hyp_length += hyp.size();
    r.ref_length += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const NgramCounts h = count_ngrams(hyp, n);
      const NgramCounts rc = count_ngrams(ref, n);
      for (const auto& [gram, count] : h) {
        r.totals[n - 1] += count;
        const auto it = rc.find(gram);
        if (it != rc.end()) r.matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  bool any_zero = false;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precisions[n] = r.totals[n] == 0 ? 0.0 : static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]);
    if (r.matches[n] == 0) {
      any_zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }

  const double c = static_cast<double>(r.hyp_length);
  const double ref_len = static_cast<double>(r.ref_length);
  if (r.hyp_length == 0) {
    r.brevity_penalty = 0.0;
  } else if (c < ref_len) {
    r.brevity_penalty = std::exp(1.0 - ref_len / c);
  } else {
    r.brevity_penalty = 1.0;
  }
  r.bleu = any_zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(0.25 * log_sum);
  return r;
}

std::string to_json(const BleuResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "{\"bleu\": %.6f, \"p1\": %.6f, \"p2\": %.6f, \"p3\": %.6f, \"p4\": %.6f, \"bp\": %.6f, "
                "\"hyp_len\": %zu, \"ref_len\": %zu}\n",
                r.bleu, r.precisions[0], r.precisions[1], r.precisions[2], r.precisions[3], r.brevity_penalty,
                r.hyp_length, r.ref_length);
  return buf;
}

}  // namespace lgnmt
