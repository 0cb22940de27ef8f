#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgnmt/autodiff.hpp"
#include "lgnmt/bleu.hpp"
#include "lgnmt/errors.hpp"
#include "lgnmt/subword.hpp"
#include "lgnmt/transformer.hpp"

namespace lgnmt {

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 3e-4;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double min_delta = 1e-4;
  std::size_t eval_every = 1;
  std::uint64_t seed = 1;
  std::optional<double> clip_norm;  // global gradient-norm clip, off by default

  void validate() const;
};

template <class Real>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<Real>> m;
  std::vector<Tensor<Real>> v;

  static AdamState for_parameters(std::span<const Parameter<Real>> params);
};

// One Adam update from each parameter's .grad. Throws NumericalError naming
// the first parameter with a non-finite gradient, before changing anything.
template <class Real>
void adam_step(std::span<Parameter<Real>> params, AdamState<Real>& state, double learning_rate);

// Mean token cross-entropy of one teacher-forced batch (pad excluded).
template <class Real>
Var<Real> batch_loss(Model<Real>& model, Tape<Real>& tape, const std::vector<std::vector<std::int32_t>>& sources,
                     const std::vector<std::vector<std::int32_t>>& targets, const ForwardOptions& opts = {});

// Stop after `patience` consecutive epochs whose loss fails to beat the best
// so far by more than min_delta.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  // Returns true when training should stop after this epoch.
  bool update(double loss);

  double best() const noexcept { return best_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double valid_loss = 0;
  std::optional<double> valid_bleu;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;  // training-mode loss of every optimiser step
  bool stopped_early = false;
  std::size_t best_epoch = 0;  // epoch number with the highest valid BLEU, 0 if none

  // JSON-lines, one {"epoch","train_loss","valid_loss","valid_bleu","seconds"}
  // per epoch; valid_bleu is null when not evaluated.
  std::string to_jsonl() const;
  static TrainHistory from_jsonl(std::string_view text);
};

std::string to_json_line(const EpochRecord& record);

struct ParallelIds {
  std::vector<std::vector<std::int32_t>> src;
  std::vector<std::vector<std::int32_t>> tgt;

  std::size_t size() const noexcept { return src.size(); }
};

struct TrainingData {
  ParallelIds train;
  ParallelIds valid;
  // Target-side vocabulary, used to turn decoded ids back into words.
  const Vocabulary* target_vocab = nullptr;
  // Word-token references for validation BLEU; derived from valid.tgt when empty.
  std::vector<TokenSequence> valid_references;
};

template <class Real>
struct TrainResult {
  Model<Real> best_model;
  TrainHistory history;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history) : Error(what), history_(std::move(history)) {}
  const TrainHistory& history() const noexcept { return history_; }

 private:
  TrainHistory history_;
};

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
};

// Seeded per-epoch shuffle, sentence-count batches, teacher forcing, Adam,
// early stopping on validation loss, model selection on validation BLEU
// (ties to the earlier epoch; the last epoch is always scored). Throws
// TrainingDiverged on a non-finite loss.
template <class Real>
TrainResult<Real> train(Model<Real> model, const TrainingData& data, const TrainConfig& config,
                        const TrainCallbacks& callbacks = {});

// Token-weighted mean validation loss in eval mode.
template <class Real>
double evaluate_loss(const Model<Real>& model, const ParallelIds& data, std::size_t batch_size);

// Corpus BLEU of greedy decodes against word-token references.
template <class Real>
double validation_bleu(const Model<Real>& model, const ParallelIds& data, const Vocabulary& target_vocab,
                       const std::vector<TokenSequence>& references, std::size_t batch_size);

}  // namespace lgnmt
