#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "lgnmt/sweep.hpp"

namespace lgnmt {

// Key names used in reports and history files.
inline constexpr std::array<std::string_view, 3> kHyperParameterNames{"dim_model", "tm_dim_ff", "batch_size"};

struct Correlation {
  double r = 0;
  bool degenerate = false;  // one side had zero variance; r is reported as 0
};

// Pearson r (two-pass, clamped to [-1, 1]). Throws ConfigError when the
// lengths differ or fewer than 2 values are given.
Correlation pearson(std::span<const double> x, std::span<const double> y);

// r of each raw hyper-parameter against the objective over completed
// trials. Throws ConfigError with fewer than 2 completed trials.
std::array<Correlation, 3> correlation_report(const SweepHistory& history);

// Random-forest importance over completed trials. Throws ConfigError with
// fewer than 5 completed trials.
std::array<double, 3> importance_report(const SweepHistory& history, std::uint64_t seed);

struct AnalysisReport {
  std::array<Correlation, 3> correlation;
  std::array<double, 3> importance{};
  std::size_t completed_trials = 0;
};

AnalysisReport analyze(const SweepHistory& history, std::uint64_t seed);

// {"correlation": {...}, "importance": {...}}, plus "degenerate" listing any
// flagged hyper-parameters.
std::string to_json(const AnalysisReport& report);
std::string to_markdown(const AnalysisReport& report);

}  // namespace lgnmt
