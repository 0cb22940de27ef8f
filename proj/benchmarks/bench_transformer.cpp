#include <benchmark/benchmark.h>

#include "lgnmt/evaluate.hpp"
#include "lgnmt/training.hpp"

namespace {

lgnmt::ModelConfig desk_config() {
  lgnmt::ModelConfig c;
  c.dim_model = 128;
  c.dim_ff = 256;
  c.n_encoder_layers = 2;
  c.n_decoder_layers = 2;
  c.n_heads = 4;
  c.src_vocab_size = 350;
  c.tgt_vocab_size = 350;
  return c;
}

std::vector<std::vector<std::int32_t>> batch_of(std::size_t n, std::size_t len) {
  lgnmt::SplitMix64 rng(5);
  std::vector<std::vector<std::int32_t>> rows(n);
  for (auto& r : rows)
    for (std::size_t i = 0; i < len; ++i) r.push_back(static_cast<std::int32_t>(4 + rng.bounded(346)));
  return rows;
}

// One optimiser step on a batch of 64 sentences of 20 subwords.
void BM_TrainStep(benchmark::State& state) {
  lgnmt::Model<float> model(desk_config(), 1);
  auto adam = lgnmt::AdamState<float>::for_parameters(model.parameters());
  lgnmt::SplitMix64 rng(1);
  const auto src = batch_of(64, 20);
  const auto tgt = batch_of(64, 20);
  for (auto _ : state) {
    model.zero_grad();
    lgnmt::Tape<float> tape;
    auto loss = lgnmt::batch_loss(model, tape, src, tgt, {lgnmt::Mode::train, &rng});
    tape.backward(loss);
    lgnmt::adam_step<float>(model.parameters(), adam, 3e-4);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  const lgnmt::Model<float> model(desk_config(), 1);
  const auto src = batch_of(32, 20);
  for (auto _ : state) benchmark::DoNotOptimize(lgnmt::greedy_decode_batch(model, src, 30));
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

}  // namespace
