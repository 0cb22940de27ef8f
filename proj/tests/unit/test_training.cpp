#include <doctest.h>

#include <cmath>
#include <limits>

#include "lgnmt/training.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace lgnmt;

namespace {

Parameter<double> scalar_param(double v) { return {"theta", Tensor<double>({1}, {v})}; }

// Sets grad to a * (theta - c) and takes one step.
void quadratic_step(std::vector<Parameter<double>>& ps, AdamState<double>& st, double a, double c, double lr) {
  ps[0].grad[0] = a * (ps[0].value[0] - c);
  adam_step<double>(ps, st, lr);
}

ModelConfig copy_model(std::size_t vocab) {
  ModelConfig c;
  c.dim_model = 16;
  c.dim_ff = 32;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 1;
  c.n_heads = 2;
  c.dropout_rate = 0.0;
  c.src_vocab_size = vocab;
  c.tgt_vocab_size = vocab;
  c.max_len = 16;
  return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("adam matches the scalar oracle") {
  for (auto [theta0, a, c, lr] : {std::array<double, 4>{1.0, 2.0, -0.5, 0.1}, {-3.0, 0.5, 4.0, 1e-3}}) {
    std::vector<Parameter<double>> ps{scalar_param(theta0)};
    auto st = AdamState<double>::for_parameters(ps);
    const auto trace = testing::scalar_adam_quadratic(theta0, a, c, lr, 2);
    quadratic_step(ps, st, a, c, lr);
    CHECK(std::abs(ps[0].value[0] - trace[1]) <= 1e-12);
    CHECK(std::abs(std::abs(trace[1] - theta0) - lr) <= 1e-6 * lr);
    quadratic_step(ps, st, a, c, lr);
    CHECK(std::abs(ps[0].value[0] - trace[2]) <= 1e-12);
    CHECK(st.step == 2);
  }
}

TEST_CASE("adam: zero gradient and zero learning rate") {
  std::vector<Parameter<double>> ps{scalar_param(1.5)};
  auto st = AdamState<double>::for_parameters(ps);
  adam_step<double>(ps, st, 0.1);
  CHECK(ps[0].value[0] == 1.5);
  CHECK(st.step == 1);
  quadratic_step(ps, st, 3.0, 0.0, 0.0);
  CHECK(ps[0].value[0] == 1.5);
}

TEST_CASE("adam: non-finite gradient names the parameter") {
  std::vector<Parameter<double>> ps{scalar_param(1.0), {"decoder.w", Tensor<double>({2}, 0.0)}};
  auto st = AdamState<double>::for_parameters(ps);
  ps[0].grad[0] = 1.0;
  ps[1].grad[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step<double>(ps, st, 0.1);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("decoder.w") != std::string::npos);
  }
  CHECK(ps[0].value[0] == 1.0);
  CHECK(st.step == 0);
}

TEST_CASE("early stopping trace") {
  EarlyStopping stop(2, 0.0);
  const std::vector<double> losses{3.0, 2.0, 2.1, 2.2, 2.3};
  std::size_t stopped_at = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (stop.update(losses[i])) {
      stopped_at = i + 1;
      break;
    }
  }
  CHECK(stopped_at == 4);
  CHECK(stop.best() == 2.0);

  EarlyStopping strict(1, 0.5);
  CHECK_FALSE(strict.update(3.0));
  CHECK(strict.update(2.6));  // not better by more than min_delta
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("cross entropy of uniform logits is ln V") {
  Tape<double> tape(false);
  const std::vector<std::int32_t> targets{5, 2, 0};
  const auto loss = cross_entropy(tape.constant(Tensor<double>({3, 8}, 1.5)), targets, 0);
  CHECK(loss.value()[0] == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("batch loss ignores padding") {
  const auto task = testing::copy_task(6, 6, 8, 2);
  Model<double> m(copy_model(task.vocab.size()), 1);
  using Rows = std::vector<std::vector<std::int32_t>>;
  std::size_t j = 1;
  while (task.sequences[j].size() == task.sequences[0].size()) ++j;
  const Rows r0{task.sequences[0]}, r1{task.sequences[j]};
  const Rows both{task.sequences[0], task.sequences[j]};
  auto loss = [&](const Rows& rows) {
    Tape<double> tape(false);
    return batch_loss(m, tape, rows, rows).value()[0];
  };
  // Token-weighted: each row contributes len + 1 target positions (with eos).
  const double n0 = double(r0[0].size() + 1), n1 = double(r1[0].size() + 1);
  CHECK(loss(both) == doctest::Approx((n0 * loss(r0) + n1 * loss(r1)) / (n0 + n1)).epsilon(1e-12));
}

TEST_CASE("train: fixed epochs, determinism, history round trip") {
  const auto task = testing::copy_task(12, 6, 5, 3);
  TrainingData data;
  data.train = {task.sequences, task.sequences};
  data.valid = {task.sequences, task.sequences};
  data.target_vocab = &task.vocab;
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 3;
  cfg.patience = 5;
  cfg.seed = 11;

  std::size_t callbacks = 0;
  const auto a = train(Model<double>(copy_model(task.vocab.size()), 1), data, cfg,
                       {[&](const EpochRecord&) { ++callbacks; }});
  const auto b = train(Model<double>(copy_model(task.vocab.size()), 1), data, cfg);
  CHECK(callbacks == 3);
  CHECK(a.history.epochs.size() == 3);
  CHECK_FALSE(a.history.stopped_early);
  CHECK(a.history.step_losses.size() == 9);
  CHECK(a.history.step_losses == b.history.step_losses);
  CHECK(a.best_model == b.best_model);
  CHECK(a.history.epochs.back().valid_bleu.has_value());
  CHECK(a.history.best_epoch >= 1);

  const auto back = TrainHistory::from_jsonl(a.history.to_jsonl());
  CHECK(back.to_jsonl() == a.history.to_jsonl());
  REQUIRE(back.epochs.size() == 3);
  CHECK(back.epochs[1].train_loss == a.history.epochs[1].train_loss);
}

TEST_CASE("train: rejects empty data") {
  TrainingData data;
  CHECK_THROWS_AS(train(Model<double>(copy_model(8), 1), data, TrainConfig{}), ConfigError);
}

}  // TEST_SUITE
