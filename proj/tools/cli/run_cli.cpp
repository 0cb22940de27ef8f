#include "run_cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lgnmt/analysis.hpp"
#include "lgnmt/bleu.hpp"
#include "lgnmt/checkpoint.hpp"
#include "lgnmt/corpus.hpp"
#include "lgnmt/errors.hpp"
#include "lgnmt/evaluate.hpp"
#include "lgnmt/subword.hpp"
#include "lgnmt/sweep.hpp"
#include "lgnmt/training.hpp"
#include "pipeline_config.hpp"

namespace lgnmt::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const Direction kUnified{"en", "lg"};

struct Options {
  std::string config_path;
  std::string direction;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> max_epochs;
  std::string input;
  std::string hyp;
  std::string ref;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

struct Session {
  PipelineConfig config;
  fs::path out;

  fs::path merged() const { return out / "merged.jsonl"; }
  fs::path corpus() const { return out / "corpus.jsonl"; }
  fs::path clean_report() const { return out / "clean_report.json"; }
  fs::path split(std::string_view name) const { return out / "split" / (std::string(name) + ".jsonl"); }
  fs::path merges(std::string_view lang) const { return out / "bpe" / (std::string(lang) + ".merges"); }
  fs::path vocab(std::string_view lang) const { return out / "bpe" / (std::string(lang) + ".vocab"); }
  fs::path run_dir(std::string_view direction) const { return out / std::string(direction); }
};

Session open_session(const Options& opt) {
  if (opt.config_path.empty()) throw UsageError("--config is required");
  Session s{PipelineConfig::load(opt.config_path), {}};
  s.out = opt.out_dir.empty() ? s.config.output_dir : fs::path(opt.out_dir);
  return s;
}

// Source and target languages for a direction flag.
std::pair<std::string, std::string> languages(const std::string& direction) {
  if (direction == "en2lu") return {"en", "lg"};
  if (direction == "lu2en") return {"lg", "en"};
  throw UsageError("--direction must be en2lu or lu2en");
}

Corpus load_split(const Session& s, std::string_view name) { return from_jsonl(read_file(s.split(name)), kUnified); }

Corpus orient(Corpus corpus, const std::string& direction) {
  if (direction == "lu2en") {
    for (auto& p : corpus.pairs) std::swap(p.src, p.tgt);
    corpus.direction = corpus.direction.reversed();
  }
  return corpus;
}

SubwordCodec load_codec(const Session& s, const std::string& lang) {
  return {BpeModel::deserialize(read_file(s.merges(lang))), Vocabulary::deserialize(read_file(s.vocab(lang)))};
}

struct EncodedSet {
  ParallelIds ids;
  std::vector<TokenSequence> references;
  std::size_t dropped_too_long = 0;
};

// Pairs that do not fit the positional table (ids + eos) are dropped.
EncodedSet encode_set(const Corpus& corpus, const SubwordCodec& src, const SubwordCodec& tgt, std::size_t max_len) {
  EncodedSet out;
  BpeEncoder es(src.bpe);
  BpeEncoder et(tgt.bpe);
  for (const auto& p : corpus.pairs) {
    auto s = es.encode_ids(src.vocab, p.src);
    auto t = et.encode_ids(tgt.vocab, p.tgt);
    if (s.size() + 1 > max_len || t.size() + 1 > max_len) {
      ++out.dropped_too_long;
      continue;
    }
    out.ids.src.push_back(std::move(s));
    out.ids.tgt.push_back(std::move(t));
    out.references.push_back(tokenize(p.tgt));
  }
  return out;
}

struct PreparedData {
  SubwordCodec src;
  SubwordCodec tgt;
  EncodedSet train;
  EncodedSet valid;
};

PreparedData prepare(const Session& s, const std::string& direction) {
  const auto [src_lang, tgt_lang] = languages(direction);
  PreparedData d{load_codec(s, src_lang), load_codec(s, tgt_lang), {}, {}};
  d.train = encode_set(orient(load_split(s, "train"), direction), d.src, d.tgt, s.config.model.max_len);
  d.valid = encode_set(orient(load_split(s, "valid"), direction), d.src, d.tgt, s.config.model.max_len);
  if (d.train.ids.size() == 0) throw ConfigError("no training pairs fit within model.max_len");
  if (d.valid.ids.size() == 0) throw ConfigError("no validation pairs fit within model.max_len");
  return d;
}

TrainResult<float> run_training(const PreparedData& d, ModelConfig model, const TrainConfig& train_cfg,
                                std::ostream& err, const std::string& tag) {
  model.src_vocab_size = d.src.vocab.size();
  model.tgt_vocab_size = d.tgt.vocab.size();
  model.validate();
  TrainingData data;
  data.train = d.train.ids;
  data.valid = d.valid.ids;
  data.target_vocab = &d.tgt.vocab;
  data.valid_references = d.valid.references;
  TrainCallbacks callbacks;
  callbacks.on_epoch = [&](const EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "%s epoch %zu train_loss %.4f valid_loss %.4f valid_bleu %s (%.1fs)\n",
                  tag.c_str(), r.epoch, r.train_loss, r.valid_loss,
                  r.valid_bleu ? std::to_string(*r.valid_bleu).c_str() : "-", r.seconds);
    err << line << std::flush;
  };
  return train(Model<float>(model, model.seed), data, train_cfg, callbacks);
}

// ---- subcommands -----------------------------------------------------------

int cmd_ingest(const Options& opt, std::ostream& err) {
  const Session s = open_session(opt);
  s.config.validate_inputs();
  std::vector<Corpus> parts;
  for (const auto& src : s.config.corpora) {
    const std::string text = read_file(src.path);
    const Origin origin = Origin::parse(src.origin);
    try {
      parts.push_back(src.format == "csv" ? parse_csv_corpus(text, src.en, src.lg, origin, kUnified)
                                          : parse_json_corpus(text, src.en, src.lg, origin, kUnified));
    } catch (const Error& e) {
      throw SchemaError(src.path.string() + ": " + e.what());
    }
    err << "read " << parts.back().size() << " pairs from " << src.path.string() << "\n";
  }
  const Corpus merged = merge_corpora(parts);
  auto [cleaned, report] = clean_corpus(merged, s.config.clean_max_len);
  write_file(s.merged(), to_jsonl(merged));
  write_file(s.corpus(), to_jsonl(cleaned));
  write_file(s.clean_report(), to_json(report));
  err << "merged " << merged.size() << " pairs, " << cleaned.size() << " after cleaning\n";
  return 0;
}

int cmd_split(const Options& opt, std::ostream& err) {
  Session s = open_session(opt);
  SplitSpec spec = s.config.split;
  if (opt.seed) spec.seed = *opt.seed;
  const Corpus corpus = from_jsonl(read_file(s.corpus()), kUnified);
  const CorpusSplit split = split_corpus(corpus, spec);
  write_file(s.split("train"), to_jsonl(split.train));
  write_file(s.split("valid"), to_jsonl(split.valid));
  write_file(s.split("test"), to_jsonl(split.test));
  err << "split " << corpus.size() << " pairs into " << split.train.size() << " / " << split.valid.size() << " / "
      << split.test.size() << "\n";
  return 0;
}

int cmd_bpe(const Options& opt, std::ostream& err) {
  const Session s = open_session(opt);
  const Corpus train = load_split(s, "train");
  for (const std::string lang : {"en", "lg"}) {
    std::vector<std::string> sentences;
    for (const auto& p : train.pairs) sentences.push_back(lang == "en" ? p.src : p.tgt);
    const BpeModel bpe = learn_bpe(word_frequencies(sentences), s.config.bpe.merges);
    std::map<std::string, std::int64_t> counts;
    BpeEncoder encoder(bpe);
    for (const auto& sentence : sentences) {
      for (const auto& word : tokenize(sentence)) {
        for (const auto& sym : encoder.encode(word)) ++counts[sym];
      }
    }
    const Vocabulary vocab = build_vocab(counts, s.config.bpe.vocab_size);
    write_file(s.merges(lang), bpe.serialize());
    write_file(s.vocab(lang), vocab.serialize());
    err << lang << ": " << bpe.size() << " merges, vocabulary of " << vocab.size() << "\n";
  }
  return 0;
}

int cmd_train(const Options& opt, std::ostream& err) {
  Session s = open_session(opt);
  const std::string direction = opt.direction.empty() ? "en2lu" : opt.direction;
  TrainConfig tc = s.config.train;
  ModelConfig mc = s.config.model;
  if (opt.seed) tc.seed = mc.seed = *opt.seed;
  if (opt.max_epochs) tc.max_epochs = *opt.max_epochs;
  tc.validate();
  const PreparedData d = prepare(s, direction);
  if (d.train.dropped_too_long + d.valid.dropped_too_long > 0) {
    err << "dropped " << d.train.dropped_too_long + d.valid.dropped_too_long
        << " pairs longer than model.max_len subwords\n";
  }

  const fs::path dir = s.run_dir(direction);
  fs::create_directories(dir);
  TrainResult<float> result = [&] {
    try {
      return run_training(d, mc, tc, err, direction);
    } catch (const TrainingDiverged& e) {
      write_file(dir / "history.jsonl", e.history().to_jsonl());
      throw;
    }
  }();
  save_checkpoint(result.best_model, dir / "model.ckpt");
  write_file(dir / "history.jsonl", result.history.to_jsonl());

  nlohmann::ordered_json summary;
  summary["direction"] = direction;
  summary["train_pairs"] = d.train.ids.size();
  summary["valid_pairs"] = d.valid.ids.size();
  summary["dropped_too_long"] = d.train.dropped_too_long + d.valid.dropped_too_long;
  summary["parameters"] = result.best_model.parameter_count();
  summary["epochs"] = result.history.epochs.size();
  summary["best_epoch"] = result.history.best_epoch;
  summary["stopped_early"] = result.history.stopped_early;
  write_file(dir / "train_summary.json", summary.dump(2) + "\n");
  err << "best epoch " << result.history.best_epoch << ", checkpoint " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_eval(const Options& opt, std::ostream& out, std::ostream& err) {
  if (!opt.hyp.empty() || !opt.ref.empty()) {
    if (opt.hyp.empty() || opt.ref.empty()) throw UsageError("--hyp and --ref must be given together");
    std::ifstream hf(opt.hyp, std::ios::binary);
    std::ifstream rf(opt.ref, std::ios::binary);
    if (!hf) throw IoError("cannot read " + opt.hyp);
    if (!rf) throw IoError("cannot read " + opt.ref);
    const auto hyp_lines = read_lines(hf);
    const auto ref_lines = read_lines(rf);
    std::vector<TokenSequence> hyps;
    std::vector<TokenSequence> refs;
    for (const auto& l : hyp_lines) hyps.push_back(tokenize(l));
    for (const auto& l : ref_lines) refs.push_back(tokenize(l));
    out << to_json(bleu_corpus(hyps, refs)) << "\n";
    return 0;
  }
  const Session s = open_session(opt);
  const std::string direction = opt.direction.empty() ? "en2lu" : opt.direction;
  const auto [src_lang, tgt_lang] = languages(direction);
  const fs::path dir = s.run_dir(direction);
  const Model<float> model = load_checkpoint(dir / "model.ckpt");
  const Corpus test = orient(load_split(s, "test"), direction);
  if (test.empty()) throw ConfigError("the test split is empty");
  const Evaluation ev = evaluate_model(model, test, load_codec(s, src_lang), load_codec(s, tgt_lang));
  const std::string json = to_json(ev.bleu);
  write_file(dir / "eval.json", json + "\n");
  write_file(dir / "translations.tsv", translations_tsv(ev.translations));
  err << direction << " test BLEU " << ev.bleu.bleu << " on " << test.size() << " sentences\n";
  out << json << "\n";
  return 0;
}

int cmd_translate(const Options& opt, std::istream& in, std::ostream& out) {
  const Session s = open_session(opt);
  const std::string direction = opt.direction.empty() ? "en2lu" : opt.direction;
  const auto [src_lang, tgt_lang] = languages(direction);
  const Model<float> model = load_checkpoint(s.run_dir(direction) / "model.ckpt");
  const SubwordCodec src = load_codec(s, src_lang);
  const SubwordCodec tgt = load_codec(s, tgt_lang);
  if (src.vocab.size() != model.config().src_vocab_size || tgt.vocab.size() != model.config().tgt_vocab_size) {
    throw ConfigError("vocabularies do not match the checkpoint");
  }

  std::vector<std::string> lines;
  if (opt.input.empty() || opt.input == "-") {
    lines = read_lines(in);
  } else {
    std::ifstream f(opt.input, std::ios::binary);
    if (!f) throw IoError("cannot read " + opt.input);
    lines = read_lines(f);
  }
  BpeEncoder encoder(src.bpe);
  const std::size_t max_len = model.config().max_len;
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < lines.size(); start += kBatch) {
    const std::size_t end = std::min(lines.size(), start + kBatch);
    std::vector<IdSequence> batch;
    std::size_t longest = 0;
    for (std::size_t i = start; i < end; ++i) {
      IdSequence ids = encoder.encode_ids(src.vocab, lines[i]);
      if (ids.size() + 1 > max_len) ids.resize(max_len - 1);
      longest = std::max(longest, ids.size());
      batch.push_back(std::move(ids));
    }
    for (const auto& ids : greedy_decode_batch(model, batch, decode_limit(longest, max_len))) {
      out << decode_ids(tgt.vocab, ids) << "\n";
    }
  }
  return 0;
}

int cmd_sweep(const Options& opt, std::ostream& err) {
  Session s = open_session(opt);
  const std::string direction = opt.direction.empty() ? "en2lu" : opt.direction;
  const std::uint64_t seed = opt.seed.value_or(s.config.sweep.seed);
  const std::size_t budget = opt.budget.value_or(s.config.sweep.budget);
  const std::size_t epochs = opt.max_epochs.value_or(s.config.sweep.max_epochs);
  const PreparedData d = prepare(s, direction);

  const fs::path history_path = s.run_dir(direction) / "sweep" / "history.jsonl";
  SweepHistory history;
  if (fs::exists(history_path)) {
    history = SweepHistory::from_jsonl(read_file(history_path));
    err << "resuming sweep with " << history.size() << " recorded trials\n";
  }
  const SearchSpace& space = s.config.sweep.space;
  for (const auto& t : history.trials) {
    if (!space.contains(t.config)) throw SchemaError("sweep history holds a configuration outside the search space");
  }
  // Rewrite what was read so a torn final line from an interrupted run is gone.
  write_file(history_path, history.to_jsonl());

  auto evaluate = [&](const TrialConfig& trial) {
    ModelConfig mc = s.config.model;
    mc.dim_model = trial.dim_model;
    mc.dim_ff = trial.dim_ff;
    TrainConfig tc = s.config.train;
    tc.batch_size = trial.batch_size;
    tc.max_epochs = epochs;
    const std::string tag = direction + " (" + std::to_string(trial.dim_model) + ", " + std::to_string(trial.dim_ff) +
                            ", " + std::to_string(trial.batch_size) + ")";
    try {
      const auto result = run_training(d, mc, tc, err, tag);
      double best = 0;
      for (const auto& r : result.history.epochs) best = std::max(best, r.valid_bleu.value_or(0.0));
      return best;
    } catch (const std::exception& e) {
      err << tag << " failed: " << e.what() << "\n";
      throw;
    }
  };
  auto persist = [&](const TrialRecord& r) {
    std::ofstream f(history_path, std::ios::binary | std::ios::app);
    f << to_json_line(r) << "\n";
    if (!f) throw IoError("failed appending to " + history_path.string());
  };
  run_sweep(space, budget, evaluate, seed, history, {}, persist);

  const auto completed = history.completed();
  if (!completed.empty()) {
    const auto* best = *std::max_element(completed.begin(), completed.end(), [](const auto* a, const auto* b) {
      return *a->objective < *b->objective;
    });
    err << "best trial " << best->index << ": (" << best->config.dim_model << ", " << best->config.dim_ff << ", "
        << best->config.batch_size << ") valid BLEU " << *best->objective << "\n";
  }
  return 0;
}

int cmd_report(const Options& opt, std::ostream& out) {
  const Session s = open_session(opt);
  const std::string direction = opt.direction.empty() ? "en2lu" : opt.direction;
  languages(direction);
  const fs::path dir = s.run_dir(direction) / "sweep";
  const SweepHistory history = SweepHistory::from_jsonl(read_file(dir / "history.jsonl"));
  const AnalysisReport report = analyze(history, opt.seed.value_or(s.config.sweep.seed));
  write_file(dir / "report.json", to_json(report));
  const std::string md = to_markdown(report);
  write_file(dir / "report.md", md);
  out << md;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Luganda-English translation workbench", argv.empty() ? "lgnmt" : argv.front()};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config_path, "Pipeline config (JSON)");
  app.add_option("--direction", opt.direction, "Translation direction")->check(CLI::IsMember({"en2lu", "lu2en"}));
  app.add_option("--seed", opt.seed, "Override the seed used by the subcommand");
  app.add_option("--out", opt.out_dir, "Override the output directory");
  app.add_option("--budget", opt.budget, "Number of sweep trials")->check(CLI::PositiveNumber);
  app.add_option("--max-epochs", opt.max_epochs, "Override the epoch limit")->check(CLI::PositiveNumber);

  auto* ingest = app.add_subcommand("ingest", "Parse, merge and clean the raw corpora");
  auto* split = app.add_subcommand("split", "Split the cleaned corpus into train/valid/test");
  auto* bpe = app.add_subcommand("bpe", "Learn BPE merges and vocabularies per language");
  auto* trn = app.add_subcommand("train", "Train one model for a direction");
  auto* translate = app.add_subcommand("translate", "Translate lines from stdin or --input");
  translate->add_option("--input", opt.input, "Input file, one sentence per line");
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on the test split, or --hyp against --ref");
  eval->add_option("--hyp", opt.hyp, "Hypothesis file, one sentence per line");
  eval->add_option("--ref", opt.ref, "Reference file, one sentence per line");
  auto* sweep = app.add_subcommand("sweep", "Bayesian hyper-parameter search (resumable)");
  auto* report = app.add_subcommand("report", "Correlation and importance report for a sweep");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<const char*> args;
  for (const auto& a : argv) args.push_back(a.c_str());
  if (args.empty()) args.push_back("lgnmt");
  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(opt, err);
    if (split->parsed()) return cmd_split(opt, err);
    if (bpe->parsed()) return cmd_bpe(opt, err);
    if (trn->parsed()) return cmd_train(opt, err);
    if (translate->parsed()) return cmd_translate(opt, in, out);
    if (eval->parsed()) return cmd_eval(opt, out, err);
    if (sweep->parsed()) return cmd_sweep(opt, err);
    if (report->parsed()) return cmd_report(opt, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace lgnmt::cli
