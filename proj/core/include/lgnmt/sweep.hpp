#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lgnmt/gaussian_process.hpp"

namespace lgnmt {

struct TrialConfig {
  std::size_t dim_model = 0;
  std::size_t dim_ff = 0;
  std::size_t batch_size = 0;

  auto operator<=>(const TrialConfig&) const = default;
};

struct SearchSpace {
  std::vector<std::size_t> dim_model_choices{8, 16, 32, 64, 128, 256, 512, 1024, 2048};
  std::vector<std::size_t> dim_ff_choices{8, 16, 32, 64, 128, 256, 512, 1024, 2048};
  std::vector<std::size_t> batch_size_choices{8, 16, 32, 64, 128};

  // Throws ConfigError unless every list is a non-empty, strictly increasing
  // run of powers of two.
  void validate() const;
  std::size_t size() const noexcept;
  bool contains(const TrialConfig& config) const;
  // Every combination, in lexicographic (dim_model, dim_ff, batch_size) order.
  std::vector<TrialConfig> grid() const;
};

// Per dimension (log2 v - log2 vmin) / (log2 vmax - log2 vmin); a
// single-choice dimension maps to 0. Throws ConfigError outside the space.
std::array<double, 3> normalize_config(const TrialConfig& config, const SearchSpace& space);

enum class TrialStatus { completed, failed };

struct TrialRecord {
  std::size_t index = 0;  // 1-based trial number
  TrialConfig config;
  std::optional<double> objective;  // set for completed trials
  TrialStatus status = TrialStatus::completed;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

struct SweepHistory {
  std::vector<TrialRecord> trials;

  std::size_t size() const noexcept { return trials.size(); }
  bool tried(const TrialConfig& config) const;
  std::vector<const TrialRecord*> completed() const;

  // {"trial","dim_model","tm_dim_ff","batch_size","objective","status"} per line.
  std::string to_jsonl() const;
  static SweepHistory from_jsonl(std::string_view text);

  friend bool operator==(const SweepHistory&, const SweepHistory&) = default;
};

std::string to_json_line(const TrialRecord& record);

struct SweepOptions {
  std::size_t n_init = 5;
  double xi = 0.01;
  GpOptions gp;
};

// While fewer than n_init trials exist (or none has completed), returns the
// first untried point of a seed-determined random permutation of the grid, so
// the initial phase samples uniformly without replacement and resumes
// cleanly. Afterwards fits a GP on completed trials and returns the untried
// point with the highest probability of improvement, ties to the
// lexicographically smallest config. Throws Error when the grid is exhausted.
TrialConfig suggest_next(const SweepHistory& history, const SearchSpace& space, std::uint64_t seed,
                         const SweepOptions& options = {});

// Returns the objective; an exception or a non-finite value marks the trial
// failed.
using TrialEvaluator = std::function<double(const TrialConfig&)>;

// Runs trials until `history` holds `budget` of them, calling `on_trial` after
// each one (for incremental persistence). Passing a partial history resumes.
void run_sweep(const SearchSpace& space, std::size_t budget, const TrialEvaluator& evaluate, std::uint64_t seed,
               SweepHistory& history, const SweepOptions& options = {},
               const std::function<void(const TrialRecord&)>& on_trial = {});

SweepHistory run_sweep(const SearchSpace& space, std::size_t budget, const TrialEvaluator& evaluate,
                       std::uint64_t seed, const SweepOptions& options = {});

}  // namespace lgnmt
