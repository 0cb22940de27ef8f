#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lgnmt/random.hpp"
#include "lgnmt/tensor.hpp"

namespace lgnmt {

// A named trainable tensor with its gradient accumulator.
template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<Real> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor<Real>(value.shape()); }
};

template <class Real>
class Tape;

// Handle to one entry of a Tape.
template <class Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Tensor<Real>& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape<Real>* tape() const noexcept { return tape_; }
  std::size_t index() const noexcept { return index_; }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Records differentiable operations in execution order, which is a valid
// topological order. backward() walks it once in reverse. A tape belongs to a
// single thread; separate tapes are independent.
template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // A non-recording tape only evaluates values (inference).
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<Real> constant(Tensor<Real> value);
  Var<Real> variable(Tensor<Real> value);
  // Leaf bound to `p`; backward() adds its gradient into p.grad.
  Var<Real> parameter(Parameter<Real>& p);
  // Leaf that reads an external tensor without copying or differentiating it.
  // The tensor must outlive the tape.
  Var<Real> reference(const Tensor<Real>& value);

  const Tensor<Real>& value(std::size_t index) const;
  bool requires_grad(std::size_t index) const { return nodes_[index].requires_grad; }

  // Gradient of the last backward() for a node (zeros if it was unreached).
  Tensor<Real> grad(const Var<Real>& v) const;

  // Reverse-mode accumulation from a scalar loss. Throws ShapeError on a
  // non-scalar loss.
  void backward(const Var<Real>& loss);
  std::size_t last_backward_visits() const noexcept { return visits_; }

  // Used by op implementations.
  Var<Real> push(Tensor<Real> value, std::initializer_list<Var<Real>> inputs, BackwardFn fn);
  const Tensor<Real>& grad_of(std::size_t index) const { return nodes_[index].grad; }
  Tensor<Real>& grad_buffer(std::size_t index);

 private:
  struct Node {
    Tensor<Real> value;
    Parameter<Real>* param = nullptr;
    const Tensor<Real>* external = nullptr;
    Tensor<Real> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool recording_;
  std::deque<Node> nodes_;
  std::size_t visits_ = 0;
};

extern template class Tape<float>;
extern template class Tape<double>;

template <class Real>
const Tensor<Real>& Var<Real>::value() const {
  return tape_->value(index_);
}

// ---- differentiable operations ----------------------------------------
//
// Broadcasting in add/mul is limited to `b` whose shape is a suffix of a's
// (bias vectors, positional tables); anything else is a ShapeError.

template <class Real> Var<Real> add(Var<Real> a, Var<Real> b);
template <class Real> Var<Real> mul(Var<Real> a, Var<Real> b);
template <class Real> Var<Real> scale(Var<Real> a, Real factor);
template <class Real> Var<Real> relu(Var<Real> a);
template <class Real> Var<Real> tanh(Var<Real> a);

// a [..., m, k] x b [k, n] or [..., k, n] (same batch dims).
template <class Real> Var<Real> matmul(Var<Real> a, Var<Real> b);
// a [..., m, k] x b[..., n, k]^T with identical batch dims.
template <class Real> Var<Real> matmul_nt(Var<Real> a, Var<Real> b);
// Swaps the last two axes.
template <class Real> Var<Real> transpose(Var<Real> a);
template <class Real> Var<Real> reshape(Var<Real> a, Shape shape);

// [B, T, H*D] -> [B, H, T, D] and back.
template <class Real> Var<Real> split_heads(Var<Real> a, std::size_t heads);
template <class Real> Var<Real> merge_heads(Var<Real> a);

// Numerically stable: subtracts the per-slice maximum. Slices whose entries
// are all -inf produce zeros.
template <class Real> Var<Real> softmax(Var<Real> a, std::ptrdiff_t axis = -1);

// scores [B, H, T, S]: key positions >= key_lengths[b] and (if causal) key
// positions > query position are set to -inf. Gradient is zero there.
template <class Real>
Var<Real> mask_attention(Var<Real> scores, std::span<const std::size_t> key_lengths, bool causal);

// Normalises over the last axis, then gain * x_hat + bias.
template <class Real> Var<Real> layer_norm(Var<Real> x, Var<Real> gain, Var<Real> bias, Real eps = Real(1e-5));

// table [V, D], ids row-major with shape `index_shape` -> index_shape + [D].
template <class Real>
Var<Real> embedding(Var<Real> table, std::span<const std::int32_t> ids, Shape index_shape);

// Inverted dropout; identity when rate == 0.
template <class Real> Var<Real> dropout(Var<Real> a, Real rate, SplitMix64& rng);

template <class Real> Var<Real> sum(Var<Real> a);
template <class Real> Var<Real> mean(Var<Real> a);

// logits [..., V]; targets one id per leading position. Mean of
// -log softmax(logits)[target] over positions whose target != pad_id.
// Throws Error when every position is padding.
template <class Real>
Var<Real> cross_entropy(Var<Real> logits, std::span<const std::int32_t> targets, std::int32_t pad_id);

// ---- gradient checking --------------------------------------------------

// Builds the scalar loss on the given tape from the current parameter values.
template <class Real>
using LossBuilder = std::function<Var<Real>(Tape<Real>&)>;

// Central differences on every coordinate of every parameter, compared with
// the tape gradient. Returns max |fd - ad| / max(|fd|, |ad|, 1e-8).
// Parameter values are restored before returning.
template <class Real>
double finite_difference_check(const LossBuilder<Real>& loss, std::span<Parameter<Real>* const> params, Real h);

}  // namespace lgnmt
