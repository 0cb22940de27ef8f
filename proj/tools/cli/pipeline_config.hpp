#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lgnmt/corpus.hpp"
#include "lgnmt/sweep.hpp"
#include "lgnmt/training.hpp"
#include "lgnmt/transformer.hpp"

namespace lgnmt::cli {

// One raw input corpus. `en` and `lg` name the CSV columns or JSON keys
// holding the English and Luganda text.
struct CorpusSource {
  std::filesystem::path path;
  std::string format;  // "csv" | "json"
  std::string en;
  std::string lg;
  std::string origin;
};

struct BpeSettings {
  std::size_t merges = 10000;
  std::size_t vocab_size = 10000;
};

struct SweepSettings {
  std::size_t budget = 30;
  std::uint64_t seed = 1;
  std::size_t max_epochs = 10;
  SearchSpace space;  // defaults to the full 405-point grid
};

struct PipelineConfig {
  std::vector<CorpusSource> corpora;
  std::size_t clean_max_len = 128;
  SplitSpec split;
  BpeSettings bpe;
  ModelConfig model;  // vocabulary sizes are filled in from the learned vocabularies
  TrainConfig train;
  SweepSettings sweep;
  std::filesystem::path output_dir = "out";

  // Relative corpus paths resolve against the config file's directory;
  // the output directory against the working directory. Throws ConfigError
  // on unknown keys or bad values.
  static PipelineConfig parse(std::string_view json_text, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);

  // Every corpus path must exist.
  void validate_inputs() const;
};

}  // namespace lgnmt::cli
