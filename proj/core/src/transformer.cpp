#include "lgnmt/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "lgnmt/errors.hpp"
#include "lgnmt/subword.hpp"

namespace lgnmt {

void ModelConfig::validate() const {
  if (dim_model == 0 || dim_ff == 0 || n_encoder_layers == 0 || n_decoder_layers == 0 || n_heads == 0 ||
      src_vocab_size == 0 || tgt_vocab_size == 0 || max_len == 0) {
    throw ConfigError("model dimensions, layer counts, vocabulary sizes and max_len must be positive");
  }
  if (dim_model % n_heads != 0) {
    throw ConfigError("dim_model " + std::to_string(dim_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (dim_model % 2 != 0) throw ConfigError("dim_model must be even for sinusoidal positions");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
}

std::size_t count_parameters(const ModelConfig& c) {
  const std::size_t d = c.dim_model, f = c.dim_ff;
  const std::size_t attention = 4 * d * d;
  const std::size_t norm = 2 * d;
  const std::size_t ff = d * f + f + f * d + d;
  const std::size_t encoder_layer = attention + norm + ff + norm;
  const std::size_t decoder_layer = 2 * attention + 3 * norm + ff;
  return c.src_vocab_size * d + c.tgt_vocab_size * d + c.n_encoder_layers * encoder_layer +
         c.n_decoder_layers * decoder_layer + d * c.tgt_vocab_size + c.tgt_vocab_size;
}

TokenBatch TokenBatch::from_sequences(const std::vector<std::vector<std::int32_t>>& rows, std::int32_t pad_id) {
  TokenBatch b;
  b.batch = rows.size();
  for (const auto& r : rows) b.length = std::max(b.length, r.size());
  b.ids.assign(b.batch * b.length, pad_id);
  b.lengths.resize(b.batch);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.length));
    b.lengths[i] = rows[i].size();
  }
  return b;
}

TokenBatch make_source_batch(const std::vector<std::vector<std::int32_t>>& sources) {
  std::vector<std::vector<std::int32_t>> rows;
  rows.reserve(sources.size());
  for (const auto& s : sources) {
    rows.push_back(s);
    rows.back().push_back(Vocabulary::eos_id);
  }
  return TokenBatch::from_sequences(rows, Vocabulary::pad_id);
}

TeacherForcingBatch make_target_batch(const std::vector<std::vector<std::int32_t>>& targets) {
  std::vector<std::vector<std::int32_t>> inputs;
  std::vector<std::vector<std::int32_t>> outputs;
  inputs.reserve(targets.size());
  outputs.reserve(targets.size());
  for (const auto& t : targets) {
    std::vector<std::int32_t> in{Vocabulary::bos_id};
    in.insert(in.end(), t.begin(), t.end());
    std::vector<std::int32_t> out(t.begin(), t.end());
    out.push_back(Vocabulary::eos_id);
    inputs.push_back(std::move(in));
    outputs.push_back(std::move(out));
  }
  TeacherForcingBatch batch;
  batch.decoder_input = TokenBatch::from_sequences(inputs, Vocabulary::pad_id);
  batch.targets = TokenBatch::from_sequences(outputs, Vocabulary::pad_id).ids;
  return batch;
}

template <class Real>
Tensor<Real> positional_encoding(std::size_t max_len, std::size_t dim_model) {
  if (dim_model % 2 != 0) throw ConfigError("positional encoding needs an even dim_model");
  Tensor<Real> pe(Shape{max_len, dim_model});
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < dim_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim_model));
      pe[pos * dim_model + 2 * i] = static_cast<Real>(std::sin(angle));
      pe[pos * dim_model + 2 * i + 1] = static_cast<Real>(std::cos(angle));
    }
  }
  return pe;
}

template Tensor<float> positional_encoding<float>(std::size_t, std::size_t);
template Tensor<double> positional_encoding<double>(std::size_t, std::size_t);

// ---- Model -------------------------------------------------------------

template <class Real>
std::size_t Model<Real>::add(std::string name, Shape shape) {
  params_.emplace_back(std::move(name), Tensor<Real>(std::move(shape)));
  return params_.size() - 1;
}

template <class Real>
void Model<Real>::build_layout() {
  const std::size_t d = config_.dim_model, f = config_.dim_ff;
  layout_.src_embed = add("src_embed", {config_.src_vocab_size, d});
  layout_.tgt_embed = add("tgt_embed", {config_.tgt_vocab_size, d});
  auto attention = [&](const std::string& prefix) {
    AttentionIds ids;
    ids.wq = add(prefix + ".wq", {d, d});
    ids.wk = add(prefix + ".wk", {d, d});
    ids.wv = add(prefix + ".wv", {d, d});
    ids.wo = add(prefix + ".wo", {d, d});
    return ids;
  };
  auto norm = [&](const std::string& prefix) {
    NormIds ids;
    ids.gain = add(prefix + ".gain", {d});
    ids.bias = add(prefix + ".bias", {d});
    params_[ids.gain].value.fill(Real(1));
    return ids;
  };
  auto feed_forward = [&](const std::string& prefix) {
    FeedForwardIds ids;
    ids.w1 = add(prefix + ".w1", {d, f});
    ids.b1 = add(prefix + ".b1", {f});
    ids.w2 = add(prefix + ".w2", {f, d});
    ids.b2 = add(prefix + ".b2", {d});
    return ids;
  };
  for (std::size_t l = 0; l < config_.n_encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncoderLayerIds ids;
    ids.self_attn = attention(p + ".self_attn");
    ids.norm1 = norm(p + ".norm1");
    ids.ff = feed_forward(p + ".ff");
    ids.norm2 = norm(p + ".norm2");
    layout_.encoder.push_back(ids);
  }
  for (std::size_t l = 0; l < config_.n_decoder_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecoderLayerIds ids;
    ids.self_attn = attention(p + ".self_attn");
    ids.norm1 = norm(p + ".norm1");
    ids.cross_attn = attention(p + ".cross_attn");
    ids.norm2 = norm(p + ".norm2");
    ids.ff = feed_forward(p + ".ff");
    ids.norm3 = norm(p + ".norm3");
    layout_.decoder.push_back(ids);
  }
  layout_.out_w = add("out_proj.weight", {d, config_.tgt_vocab_size});
  layout_.out_b = add("out_proj.bias", {config_.tgt_vocab_size});
  positions_ = positional_encoding<Real>(config_.max_len, d);
}

template <class Real>
Model<Real>::Model(const ModelConfig& config, ZeroTag) : config_(config) {
  config_.validate();
  build_layout();
}

template <class Real>
Model<Real>::Model(const ModelConfig& config, std::uint64_t seed) : Model(config, ZeroTag{}) {
  config_.seed = seed;
  SplitMix64 rng(seed);
  for (auto& p : params_) {
    // Rank-2 tensors are weight matrices; rank-1 are biases and gains,
    // already at zero / one.
    if (p.value.rank() != 2) continue;
    const double fan_in = static_cast<double>(p.value.extent(0));
    const double fan_out = static_cast<double>(p.value.extent(1));
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : p.value.values()) x = static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
  }
}

template <class Real>
Model<Real> Model<Real>::zeros(const ModelConfig& config) {
  return Model(config, ZeroTag{});
}

template <class Real>
Parameter<Real>& Model<Real>::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw RangeError("no parameter named '" + std::string(name) + "'");
}

template <class Real>
const Parameter<Real>& Model<Real>::parameter(std::string_view name) const {
  return const_cast<Model*>(this)->parameter(name);
}

template <class Real>
std::size_t Model<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class Real>
void Model<Real>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Model<float>;
template class Model<double>;

// ---- attention -----------------------------------------------------------

template <class Real>
AttentionResult<Real> multi_head_attention(Var<Real> query, Var<Real> key, Var<Real> value, Var<Real> wq,
                                           Var<Real> wk, Var<Real> wv, Var<Real> wo, std::size_t heads,
                                           std::span<const std::size_t> key_lengths, bool causal) {
  const Shape& qs = query.shape();
  const Shape& ks = key.shape();
  if (qs.size() != 3 || ks.size() != 3 || value.shape() != ks || qs[0] != ks[0] || qs[2] != ks[2]) {
    throw ShapeError("attention inputs must be [B, T, D] / [B, S, D], got " + shape_str(qs) + ", " + shape_str(ks) +
                     ", " + shape_str(value.shape()));
  }
  const std::size_t d = qs[2];
  if (heads == 0 || d % heads != 0) throw ShapeError("attention width not divisible by head count");
  const Real inv_sqrt_dk = Real(1) / std::sqrt(static_cast<Real>(d / heads));

  Var<Real> q = split_heads(matmul(query, wq), heads);
  Var<Real> k = split_heads(matmul(key, wk), heads);
  Var<Real> v = split_heads(matmul(value, wv), heads);
  Var<Real> scores = mask_attention(scale(matmul_nt(q, k), inv_sqrt_dk), key_lengths, causal);
  Var<Real> weights = softmax(scores, -1);
  Var<Real> context = merge_heads(matmul(weights, v));
  return {matmul(context, wo), weights};
}

template AttentionResult<float> multi_head_attention(Var<float>, Var<float>, Var<float>, Var<float>, Var<float>,
                                                     Var<float>, Var<float>, std::size_t,
                                                     std::span<const std::size_t>, bool);
template AttentionResult<double> multi_head_attention(Var<double>, Var<double>, Var<double>, Var<double>,
                                                      Var<double>, Var<double>, Var<double>, std::size_t,
                                                      std::span<const std::size_t>, bool);

// ---- forward -------------------------------------------------------------

namespace {

template <class Real>
class Pass {
 public:
  Pass(Model<Real>& model, Tape<Real>& tape, const ForwardOptions& opts)
      : model_(model), tape_(tape), opts_(opts), bound_(model.parameters().size()) {
    if (opts_.mode == Mode::train && model.config().dropout_rate > 0 && opts_.rng == nullptr) {
      throw ConfigError("train-mode forward with dropout needs an rng");
    }
  }

  Var<Real> p(std::size_t index) {
    auto& slot = bound_[index];
    if (!slot) {
      auto& param = model_.parameters()[index];
      slot = tape_.recording() ? tape_.parameter(param) : tape_.reference(param.value);
    }
    return *slot;
  }

  Var<Real> drop(Var<Real> x) {
    if (opts_.mode != Mode::train) return x;
    return dropout(x, static_cast<Real>(model_.config().dropout_rate), *opts_.rng);
  }

  Var<Real> embed(std::size_t table, const TokenBatch& batch) {
    const auto& cfg = model_.config();
    if (batch.length > cfg.max_len) {
      throw RangeError("sequence length " + std::to_string(batch.length) + " exceeds max_len " +
                       std::to_string(cfg.max_len));
    }
    Var<Real> x = embedding(p(table), std::span<const std::int32_t>(batch.ids), Shape{batch.batch, batch.length});
    x = scale(x, static_cast<Real>(std::sqrt(static_cast<double>(cfg.dim_model))));
    const Tensor<Real>& pe = model_.positions();
    Tensor<Real> slice(Shape{batch.length, cfg.dim_model},
                       std::vector<Real>(pe.data(), pe.data() + batch.length * cfg.dim_model));
    return drop(add(x, tape_.constant(std::move(slice))));
  }

  Var<Real> attention(const typename Model<Real>::AttentionIds& ids, Var<Real> q, Var<Real> kv,
                      std::span<const std::size_t> key_lengths, bool causal) {
    return multi_head_attention(q, kv, kv, p(ids.wq), p(ids.wk), p(ids.wv), p(ids.wo), model_.config().n_heads,
                                key_lengths, causal)
        .output;
  }

  Var<Real> feed_forward(const typename Model<Real>::FeedForwardIds& ids, Var<Real> x) {
    Var<Real> h = relu(add(matmul(x, p(ids.w1)), p(ids.b1)));
    return add(matmul(h, p(ids.w2)), p(ids.b2));
  }

  Var<Real> residual_norm(const typename Model<Real>::NormIds& ids, Var<Real> x, Var<Real> sublayer) {
    return layer_norm(add(x, drop(sublayer)), p(ids.gain), p(ids.bias));
  }

  Var<Real> encode(const TokenBatch& src) {
    const auto& layout = model_.layout();
    std::span<const std::size_t> lengths(src.lengths);
    Var<Real> x = embed(layout.src_embed, src);
    for (const auto& layer : layout.encoder) {
      x = residual_norm(layer.norm1, x, attention(layer.self_attn, x, x, lengths, false));
      x = residual_norm(layer.norm2, x, feed_forward(layer.ff, x));
    }
    return x;
  }

  Var<Real> decode(Var<Real> memory, std::span<const std::size_t> src_lengths, const TokenBatch& tgt) {
    const auto& layout = model_.layout();
    if (memory.shape().size() != 3 || memory.shape()[0] != tgt.batch || src_lengths.size() != tgt.batch) {
      throw ShapeError("decoder memory " + shape_str(memory.shape()) + " does not match target batch of " +
                       std::to_string(tgt.batch));
    }
    // Causal masking alone hides right-padding from every real position.
    const std::vector<std::size_t> full(tgt.batch, tgt.length);
    Var<Real> y = embed(layout.tgt_embed, tgt);
    for (const auto& layer : layout.decoder) {
      y = residual_norm(layer.norm1, y, attention(layer.self_attn, y, y, full, true));
      y = residual_norm(layer.norm2, y, attention(layer.cross_attn, y, memory, src_lengths, false));
      y = residual_norm(layer.norm3, y, feed_forward(layer.ff, y));
    }
    return add(matmul(y, p(layout.out_w)), p(layout.out_b));
  }

 private:
  Model<Real>& model_;
  Tape<Real>& tape_;
  ForwardOptions opts_;
  std::vector<std::optional<Var<Real>>> bound_;
};

}  // namespace

template <class Real>
Var<Real> encode(Model<Real>& model, Tape<Real>& tape, const TokenBatch& src, const ForwardOptions& opts) {
  return Pass<Real>(model, tape, opts).encode(src);
}

template <class Real>
Var<Real> decode(Model<Real>& model, Tape<Real>& tape, Var<Real> memory, std::span<const std::size_t> src_lengths,
                 const TokenBatch& tgt_in, const ForwardOptions& opts) {
  return Pass<Real>(model, tape, opts).decode(memory, src_lengths, tgt_in);
}

template <class Real>
Var<Real> forward(Model<Real>& model, Tape<Real>& tape, const TokenBatch& src, const TokenBatch& tgt_in,
                  const ForwardOptions& opts) {
  if (src.batch != tgt_in.batch) throw ShapeError("source and target batches differ in size");
  Pass<Real> pass(model, tape, opts);
  Var<Real> memory = pass.encode(src);
  return pass.decode(memory, src.lengths, tgt_in);
}

template <class Real>
Tensor<Real> forward_logits(const Model<Real>& model, const TokenBatch& src, const TokenBatch& tgt_in) {
  Tape<Real> tape(false);
  // A non-recording tape only reads parameter values.
  return forward(const_cast<Model<Real>&>(model), tape, src, tgt_in, ForwardOptions{}).value();
}

#define LGNMT_INSTANTIATE_FORWARD(R)                                                                        \
  template Var<R> encode(Model<R>&, Tape<R>&, const TokenBatch&, const ForwardOptions&);                    \
  template Var<R> decode(Model<R>&, Tape<R>&, Var<R>, std::span<const std::size_t>, const TokenBatch&,      \
                         const ForwardOptions&);                                                            \
  template Var<R> forward(Model<R>&, Tape<R>&, const TokenBatch&, const TokenBatch&, const ForwardOptions&); \
  template Tensor<R> forward_logits(const Model<R>&, const TokenBatch&, const TokenBatch&);

LGNMT_INSTANTIATE_FORWARD(float)
LGNMT_INSTANTIATE_FORWARD(double)

#undef LGNMT_INSTANTIATE_FORWARD

}  // namespace lgnmt
