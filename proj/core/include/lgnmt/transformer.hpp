#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lgnmt/autodiff.hpp"
#include "lgnmt/random.hpp"
#include "lgnmt/tensor.hpp"

namespace lgnmt {

struct ModelConfig {
  std::size_t dim_model = 512;
  std::size_t dim_ff = 2048;
  std::size_t n_encoder_layers = 6;
  std::size_t n_decoder_layers = 6;
  std::size_t n_heads = 8;
  double dropout_rate = 0.1;
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;
  std::size_t max_len = 128;
  std::uint64_t seed = 1;

  // Throws ConfigError: positive counts, dim_model % n_heads == 0, even
  // dim_model, dropout in [0, 1).
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Exact number of scalar parameters a model with this config holds.
std::size_t count_parameters(const ModelConfig& config);

// A batch of id sequences padded on the right with pad_id. `lengths` holds the
// unpadded length of each row; attention masks are derived from it.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> lengths;

  static TokenBatch from_sequences(const std::vector<std::vector<std::int32_t>>& rows, std::int32_t pad_id = 0);
};

// Source side: ids + eos. Target side: decoder input bos + ids and loss target
// ids + eos, both padded.
TokenBatch make_source_batch(const std::vector<std::vector<std::int32_t>>& sources);
struct TeacherForcingBatch {
  TokenBatch decoder_input;
  std::vector<std::int32_t> targets;  // [batch * length], pad where padded
};
TeacherForcingBatch make_target_batch(const std::vector<std::vector<std::int32_t>>& targets);

// entry(pos, 2i) = sin(pos / 10000^(2i/d)), entry(pos, 2i+1) = cos(same).
template <class Real>
Tensor<Real> positional_encoding(std::size_t max_len, std::size_t dim_model);

enum class Mode { eval, train };

template <class Real>
class Model {
 public:
  // Xavier-uniform weights, zero biases, unit norm gains.
  Model(const ModelConfig& config, std::uint64_t seed);

  // Same layout, every tensor zero (used when loading checkpoints).
  static Model zeros(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<Parameter<Real>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<Real>>& parameters() const noexcept { return params_; }
  Parameter<Real>& parameter(std::string_view name);
  const Parameter<Real>& parameter(std::string_view name) const;
  std::size_t parameter_count() const;
  void zero_grad();

  const Tensor<Real>& positions() const noexcept { return positions_; }

  friend bool operator==(const Model& a, const Model& b) {
    if (!(a.config_ == b.config_) || a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) return false;
    }
    return true;
  }

  struct AttentionIds {
    std::size_t wq, wk, wv, wo;
  };
  struct NormIds {
    std::size_t gain, bias;
  };
  struct FeedForwardIds {
    std::size_t w1, b1, w2, b2;
  };
  struct EncoderLayerIds {
    AttentionIds self_attn;
    NormIds norm1;
    FeedForwardIds ff;
    NormIds norm2;
  };
  struct DecoderLayerIds {
    AttentionIds self_attn;
    NormIds norm1;
    AttentionIds cross_attn;
    NormIds norm2;
    FeedForwardIds ff;
    NormIds norm3;
  };
  struct Layout {
    std::size_t src_embed = 0, tgt_embed = 0, out_w = 0, out_b = 0;
    std::vector<EncoderLayerIds> encoder;
    std::vector<DecoderLayerIds> decoder;
  };
  const Layout& layout() const noexcept { return layout_; }

 private:
  struct ZeroTag {};
  Model(const ModelConfig& config, ZeroTag);
  std::size_t add(std::string name, Shape shape);
  void build_layout();

  ModelConfig config_;
  std::vector<Parameter<Real>> params_;
  Layout layout_;
  Tensor<Real> positions_;
};

extern template class Model<float>;
extern template class Model<double>;

template <class Real>
Model<Real> init_model(const ModelConfig& config, std::uint64_t seed) {
  return Model<Real>(config, seed);
}

template <class Real>
struct AttentionResult {
  Var<Real> output;   // [B, T, D]
  Var<Real> weights;  // [B, H, T, S], softmax over S
};

// Scaled dot-product attention over `heads` heads with projections wq, wk, wv
// [D, D] and output projection wo [D, D]. Keys at positions >= key_lengths[b]
// and (when causal) after the query position get weight zero.
template <class Real>
AttentionResult<Real> multi_head_attention(Var<Real> query, Var<Real> key, Var<Real> value, Var<Real> wq,
                                           Var<Real> wk, Var<Real> wv, Var<Real> wo, std::size_t heads,
                                           std::span<const std::size_t> key_lengths, bool causal);

// Options for a forward pass. Dropout needs an rng in train mode.
struct ForwardOptions {
  Mode mode = Mode::eval;
  SplitMix64* rng = nullptr;
};

// Encoder stack output [B, S, D].
template <class Real>
Var<Real> encode(Model<Real>& model, Tape<Real>& tape, const TokenBatch& src, const ForwardOptions& opts = {});

// Decoder stack + output projection: logits [B, T, tgt_vocab]. `memory` must
// live on `tape`.
template <class Real>
Var<Real> decode(Model<Real>& model, Tape<Real>& tape, Var<Real> memory, std::span<const std::size_t> src_lengths,
                 const TokenBatch& tgt_in, const ForwardOptions& opts = {});

template <class Real>
Var<Real> forward(Model<Real>& model, Tape<Real>& tape, const TokenBatch& src, const TokenBatch& tgt_in,
                  const ForwardOptions& opts = {});

// Eval-mode logits without recording gradients. The model is not modified.
template <class Real>
Tensor<Real> forward_logits(const Model<Real>& model, const TokenBatch& src, const TokenBatch& tgt_in);

}  // namespace lgnmt
