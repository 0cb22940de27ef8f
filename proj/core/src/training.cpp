#include "lgnmt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "lgnmt/evaluate.hpp"
#include "lgnmt/random.hpp"

namespace lgnmt {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(min_delta >= 0)) throw ConfigError("min_delta must be non-negative");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
  if (clip_norm && !(*clip_norm > 0)) throw ConfigError("clip_norm must be positive");
}

template <class Real>
AdamState<Real> AdamState<Real>::for_parameters(std::span<const Parameter<Real>> params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& p : params) {
    state.m.emplace_back(p.value.shape());
    state.v.emplace_back(p.value.shape());
  }
  return state;
}

template <class Real>
void adam_step(std::span<Parameter<Real>> params, AdamState<Real>& state, double learning_rate) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimiser state holds " + std::to_string(state.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape() ||
        state.v[i].shape() != p.value.shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + p.name);
    }
    for (std::size_t k = 0; k < p.grad.size(); ++k) {
      if (!std::isfinite(static_cast<double>(p.grad[k]))) {
        throw NumericalError("non-finite gradient in parameter " + p.name);
      }
    }
  }

  state.step += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    Real* theta = p.value.data();
    const Real* g = p.grad.data();
    Real* m = state.m[i].data();
    Real* v = state.v[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      const double m_hat = mk / c1;
      const double v_hat = vk / c2;
      theta[k] = static_cast<Real>(theta[k] - learning_rate * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

template <class Real>
Var<Real> batch_loss(Model<Real>& model, Tape<Real>& tape, const std::vector<std::vector<std::int32_t>>& sources,
                     const std::vector<std::vector<std::int32_t>>& targets, const ForwardOptions& opts) {
  const TokenBatch src = make_source_batch(sources);
  const TeacherForcingBatch tgt = make_target_batch(targets);
  Var<Real> logits = forward(model, tape, src, tgt.decoder_input, opts);
  return cross_entropy(logits, std::span<const std::int32_t>(tgt.targets), Vocabulary::pad_id);
}

bool EarlyStopping::update(double loss) {
  if (loss < best_ - min_delta_) {
    best_ = loss;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  return bad_epochs_ >= patience_;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["valid_loss"] = r.valid_loss;
  j["valid_bleu"] = r.valid_bleu ? nlohmann::ordered_json(*r.valid_bleu) : nlohmann::ordered_json(nullptr);
  j["seconds"] = r.seconds;
  return j.dump();
}

std::string TrainHistory::to_jsonl() const {
  std::string out;
  for (const auto& r : epochs) out += to_json_line(r) + "\n";
  return out;
}

TrainHistory TrainHistory::from_jsonl(std::string_view text) {
  TrainHistory h;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  double best_bleu = -1;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EpochRecord r;
      r.epoch = j.at("epoch").get<std::size_t>();
      r.train_loss = j.at("train_loss").get<double>();
      r.valid_loss = j.at("valid_loss").get<double>();
      if (!j.at("valid_bleu").is_null()) r.valid_bleu = j.at("valid_bleu").get<double>();
      r.seconds = j.at("seconds").get<double>();
      if (r.valid_bleu && *r.valid_bleu > best_bleu) {
        best_bleu = *r.valid_bleu;
        h.best_epoch = r.epoch;
      }
      h.epochs.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("training history: " + std::string(e.what()), line_no);
    }
  }
  return h;
}

template <class Real>
double evaluate_loss(const Model<Real>& model, const ParallelIds& data, std::size_t batch_size) {
  if (data.size() == 0) throw ConfigError("evaluate_loss: empty data set");
  auto& m = const_cast<Model<Real>&>(model);  // a non-recording tape only reads parameters
  double total = 0;
  double tokens = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<std::vector<std::int32_t>> src(data.src.begin() + static_cast<std::ptrdiff_t>(start),
                                               data.src.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<std::vector<std::int32_t>> tgt(data.tgt.begin() + static_cast<std::ptrdiff_t>(start),
                                               data.tgt.begin() + static_cast<std::ptrdiff_t>(end));
    double n = 0;
    for (const auto& t : tgt) n += static_cast<double>(t.size() + 1);
    Tape<Real> tape(false);
    total += static_cast<double>(batch_loss(m, tape, src, tgt).value()[0]) * n;
    tokens += n;
  }
  return total / tokens;
}

template <class Real>
double validation_bleu(const Model<Real>& model, const ParallelIds& data, const Vocabulary& target_vocab,
                       const std::vector<TokenSequence>& references, std::size_t batch_size) {
  std::vector<TokenSequence> hyps;
  hyps.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<IdSequence> chunk(data.src.begin() + static_cast<std::ptrdiff_t>(start),
                                  data.src.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t longest = 0;
    for (const auto& ids : chunk) longest = std::max(longest, ids.size());
    for (auto& ids : greedy_decode_batch(model, chunk, decode_limit(longest, model.config().max_len))) {
      hyps.push_back(ids_to_words(target_vocab, ids));
    }
  }
  if (references.empty()) {
    std::vector<TokenSequence> refs;
    refs.reserve(data.size());
    for (const auto& t : data.tgt) refs.push_back(ids_to_words(target_vocab, t));
    return bleu_corpus(hyps, refs).bleu;
  }
  return bleu_corpus(hyps, references).bleu;
}

namespace {

template <class Real>
void clip_gradients(std::vector<Parameter<Real>>& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    for (std::size_t k = 0; k < p.grad.size(); ++k) sq += static_cast<double>(p.grad[k]) * p.grad[k];
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const auto factor = static_cast<Real>(max_norm / norm);
  for (auto& p : params) {
    for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] *= factor;
  }
}

}  // namespace

template <class Real>
TrainResult<Real> train(Model<Real> model, const TrainingData& data, const TrainConfig& config,
                        const TrainCallbacks& callbacks) {
  config.validate();
  if (data.train.size() == 0 || data.valid.size() == 0) throw ConfigError("train: empty training or validation set");
  if (data.train.src.size() != data.train.tgt.size() || data.valid.src.size() != data.valid.tgt.size()) {
    throw ConfigError("train: source and target counts differ");
  }
  if (data.target_vocab == nullptr) throw ConfigError("train: target vocabulary is required");
  if (!data.valid_references.empty() && data.valid_references.size() != data.valid.size()) {
    throw ConfigError("train: validation references do not match the validation set");
  }

  SplitMix64 shuffle_rng(config.seed);
  SplitMix64 dropout_rng(config.seed ^ 0x6c676e6d74647270ULL);
  auto adam = AdamState<Real>::for_parameters(model.parameters());
  EarlyStopping stopper(config.patience, config.min_delta);

  TrainHistory history;
  Model<Real> best = model;
  double best_bleu = -1;
  std::vector<std::size_t> order(data.train.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(std::span<std::size_t>(order), shuffle_rng);

    double loss_sum = 0;
    double token_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::vector<std::int32_t>> src;
      std::vector<std::vector<std::int32_t>> tgt;
      double tokens = 0;
      for (std::size_t i = start; i < end; ++i) {
        src.push_back(data.train.src[order[i]]);
        tgt.push_back(data.train.tgt[order[i]]);
        tokens += static_cast<double>(tgt.back().size() + 1);
      }
      model.zero_grad();
      Tape<Real> tape;
      const ForwardOptions opts{Mode::train, &dropout_rng};
      Var<Real> loss = batch_loss(model, tape, src, tgt, opts);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingDiverged("training loss became non-finite in epoch " + std::to_string(epoch), history);
      }
      tape.backward(loss);
      if (config.clip_norm) clip_gradients(model.parameters(), *config.clip_norm);
      try {
        adam_step(std::span<Parameter<Real>>(model.parameters()), adam, config.learning_rate);
      } catch (const NumericalError& e) {
        throw TrainingDiverged(e.what(), history);
      }
      history.step_losses.push_back(value);
      loss_sum += value * tokens;
      token_sum += tokens;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / token_sum;
    record.valid_loss = evaluate_loss(model, data.valid, config.batch_size);
    if (!std::isfinite(record.valid_loss)) {
      throw TrainingDiverged("validation loss became non-finite in epoch " + std::to_string(epoch), history);
    }
    const bool stop = stopper.update(record.valid_loss);
    const bool last = stop || epoch == config.max_epochs;
    if (epoch % config.eval_every == 0 || last) {
      const double bleu = validation_bleu(model, data.valid, *data.target_vocab, data.valid_references,
                                          config.batch_size);
      record.valid_bleu = bleu;
      if (bleu > best_bleu) {
        best_bleu = bleu;
        best = model;
        history.best_epoch = epoch;
      }
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(record);
    if (callbacks.on_epoch) callbacks.on_epoch(record);
    if (stop) {
      history.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  return TrainResult<Real>{std::move(best), std::move(history)};
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Parameter<float>>, AdamState<float>&, double);
template void adam_step(std::span<Parameter<double>>, AdamState<double>&, double);
template Var<float> batch_loss(Model<float>&, Tape<float>&, const std::vector<std::vector<std::int32_t>>&,
                               const std::vector<std::vector<std::int32_t>>&, const ForwardOptions&);
template Var<double> batch_loss(Model<double>&, Tape<double>&, const std::vector<std::vector<std::int32_t>>&,
                                const std::vector<std::vector<std::int32_t>>&, const ForwardOptions&);
template double evaluate_loss(const Model<float>&, const ParallelIds&, std::size_t);
template double evaluate_loss(const Model<double>&, const ParallelIds&, std::size_t);
template double validation_bleu(const Model<float>&, const ParallelIds&, const Vocabulary&,
                                const std::vector<TokenSequence>&, std::size_t);
template double validation_bleu(const Model<double>&, const ParallelIds&, const Vocabulary&,
                                const std::vector<TokenSequence>&, std::size_t);
template TrainResult<float> train(Model<float>, const TrainingData&, const TrainConfig&, const TrainCallbacks&);
template TrainResult<double> train(Model<double>, const TrainingData&, const TrainConfig&, const TrainCallbacks&);

}  // namespace lgnmt
