#include "pipeline_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lgnmt/errors.hpp"

namespace lgnmt::cli {

namespace {

using nlohmann::json;

void only_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::parse(std::string_view json_text, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  try {
    const json root = json::parse(json_text, nullptr, true, /*ignore_comments=*/true);
    only_keys(root, "config", {"corpora", "clean", "split", "bpe", "model", "train", "sweep", "output_dir"});

    if (root.contains("corpora")) {
      for (const auto& c : root.at("corpora")) {
        only_keys(c, "corpora entry", {"path", "format", "en", "lg", "origin"});
        CorpusSource src;
        src.path = c.at("path").get<std::string>();
        if (src.path.is_relative() && !base_dir.empty()) src.path = base_dir / src.path;
        src.format = c.at("format").get<std::string>();
        if (src.format != "csv" && src.format != "json") {
          throw ConfigError("corpus format must be \"csv\" or \"json\", got \"" + src.format + "\"");
        }
        src.en = c.at("en").get<std::string>();
        src.lg = c.at("lg").get<std::string>();
        src.origin = c.value("origin", src.path.stem().string());
        cfg.corpora.push_back(std::move(src));
      }
    }
    if (root.contains("clean")) {
      const auto& c = root.at("clean");
      only_keys(c, "clean", {"max_len_tokens"});
      read(c, "max_len_tokens", cfg.clean_max_len);
    }
    if (root.contains("split")) {
      const auto& s = root.at("split");
      only_keys(s, "split", {"train", "valid", "test", "seed"});
      read(s, "train", cfg.split.train_fraction);
      read(s, "valid", cfg.split.valid_fraction);
      read(s, "test", cfg.split.test_fraction);
      read(s, "seed", cfg.split.seed);
    }
    if (root.contains("bpe")) {
      const auto& b = root.at("bpe");
      only_keys(b, "bpe", {"merges", "vocab_size"});
      read(b, "merges", cfg.bpe.merges);
      read(b, "vocab_size", cfg.bpe.vocab_size);
    }
    if (root.contains("model")) {
      const auto& m = root.at("model");
      only_keys(m, "model",
                {"dim_model", "dim_ff", "n_encoder_layers", "n_decoder_layers", "n_heads", "dropout", "max_len", "seed"});
      read(m, "dim_model", cfg.model.dim_model);
      read(m, "dim_ff", cfg.model.dim_ff);
      read(m, "n_encoder_layers", cfg.model.n_encoder_layers);
      read(m, "n_decoder_layers", cfg.model.n_decoder_layers);
      read(m, "n_heads", cfg.model.n_heads);
      read(m, "dropout", cfg.model.dropout_rate);
      read(m, "max_len", cfg.model.max_len);
      read(m, "seed", cfg.model.seed);
    }
    if (root.contains("train")) {
      const auto& t = root.at("train");
      only_keys(t, "train",
                {"batch_size", "learning_rate", "max_epochs", "patience", "min_delta", "eval_every", "seed",
                 "clip_norm"});
      read(t, "batch_size", cfg.train.batch_size);
      read(t, "learning_rate", cfg.train.learning_rate);
      read(t, "max_epochs", cfg.train.max_epochs);
      read(t, "patience", cfg.train.patience);
      read(t, "min_delta", cfg.train.min_delta);
      read(t, "eval_every", cfg.train.eval_every);
      read(t, "seed", cfg.train.seed);
      if (t.contains("clip_norm") && !t.at("clip_norm").is_null()) cfg.train.clip_norm = t.at("clip_norm").get<double>();
    }
    if (root.contains("sweep")) {
      const auto& s = root.at("sweep");
      only_keys(s, "sweep", {"budget", "seed", "max_epochs", "dim_model", "dim_ff", "batch_size"});
      read(s, "budget", cfg.sweep.budget);
      read(s, "seed", cfg.sweep.seed);
      read(s, "max_epochs", cfg.sweep.max_epochs);
      read(s, "dim_model", cfg.sweep.space.dim_model_choices);
      read(s, "dim_ff", cfg.sweep.space.dim_ff_choices);
      read(s, "batch_size", cfg.sweep.space.batch_size_choices);
    }
    if (root.contains("output_dir")) cfg.output_dir = root.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  cfg.split.validate();
  cfg.train.validate();
  cfg.sweep.space.validate();
  if (cfg.bpe.vocab_size < Vocabulary::num_specials + 1) throw ConfigError("bpe.vocab_size is too small");
  if (cfg.clean_max_len == 0) throw ConfigError("clean.max_len_tokens must be positive");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.parent_path());
}

void PipelineConfig::validate_inputs() const {
  if (corpora.empty()) throw ConfigError("config lists no corpora");
  for (const auto& c : corpora) {
    if (!std::filesystem::is_regular_file(c.path)) throw ConfigError("corpus file not found: " + c.path.string());
  }
}

}  // namespace lgnmt::cli
