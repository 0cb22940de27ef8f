#include "lgnmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lgnmt/errors.hpp"

namespace lgnmt {

// ---- Tape -----------------------------------------------------------------

template <class Real>
Var<Real> Tape<Real>::constant(Tensor<Real> value) {
  nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, false, {}});
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
Var<Real> Tape<Real>::variable(Tensor<Real> value) {
  nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, recording_, {}});
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
Var<Real> Tape<Real>::parameter(Parameter<Real>& p) {
  nodes_.push_back(Node{{}, &p, nullptr, {}, recording_, {}});
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
Var<Real> Tape<Real>::reference(const Tensor<Real>& value) {
  nodes_.push_back(Node{{}, nullptr, &value, {}, false, {}});
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
const Tensor<Real>& Tape<Real>::value(std::size_t index) const {
  const Node& node = nodes_[index];
  if (node.param) return node.param->value;
  return node.external ? *node.external : node.value;
}

template <class Real>
Tensor<Real> Tape<Real>::grad(const Var<Real>& v) const {
  const Node& node = nodes_[v.index()];
  if (node.grad.empty()) return Tensor<Real>(value(v.index()).shape());
  return node.grad;
}

template <class Real>
Tensor<Real>& Tape<Real>::grad_buffer(std::size_t index) {
  Node& node = nodes_[index];
  if (node.grad.empty()) node.grad = Tensor<Real>(value(index).shape());
  return node.grad;
}

template <class Real>
Var<Real> Tape<Real>::push(Tensor<Real> value, std::initializer_list<Var<Real>> inputs, BackwardFn fn) {
  bool needs_grad = false;
  for (const auto& in : inputs) {
    if (in.tape() != this) throw Error("operation mixes variables from different tapes");
    needs_grad = needs_grad || nodes_[in.index()].requires_grad;
  }
  needs_grad = needs_grad && recording_;
  nodes_.push_back(
      Node{std::move(value), nullptr, nullptr, {}, needs_grad, needs_grad ? std::move(fn) : BackwardFn{}});
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
void Tape<Real>::backward(const Var<Real>& loss) {
  if (loss.tape() != this) throw Error("loss belongs to a different tape");
  if (value(loss.index()).size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(value(loss.index()).shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor<Real>();
  grad_buffer(loss.index()).fill(Real(1));
  visits_ = 0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    ++visits_;
    Node& node = nodes_[i];
    if (!node.grad.empty() && node.backward) node.backward(*this, i);
  }
  for (auto& node : nodes_) {
    if (!node.param || node.grad.empty()) continue;
    Tensor<Real>& acc = node.param->grad;
    if (acc.shape() != node.param->value.shape()) acc = Tensor<Real>(node.param->value.shape());
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += node.grad[j];
  }
}

template class Tape<float>;
template class Tape<double>;

// ---- helpers ----------------------------------------------------------------

namespace {

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

template <class Real>
void check_broadcast(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
  }
}

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range");
  return static_cast<std::size_t>(axis);
}

}  // namespace

// ---- elementwise --------------------------------------------------------------

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  const Tensor<Real>& va = a.value();
  const Tensor<Real>& vb = b.value();
  check_broadcast("add", va, vb);
  Tensor<Real> out = va;
  const std::size_t inner = vb.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i % inner];
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, inner](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    if (t.requires_grad(ia)) {
      Tensor<Real>& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<Real>& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i];
    }
  });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  const Tensor<Real>& va = a.value();
  const Tensor<Real>& vb = b.value();
  check_broadcast("mul", va, vb);
  Tensor<Real> out = va;
  const std::size_t inner = vb.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i % inner];
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, inner](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    const Tensor<Real>& va = t.value(ia);
    const Tensor<Real>& vb = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor<Real>& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i % inner];
    }
    if (t.requires_grad(ib)) {
      Tensor<Real>& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i] * va[i];
    }
  });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real factor) {
  Tensor<Real> out = a.value();
  for (auto& x : out.values()) x *= factor;
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [ia, factor](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <class Real>
Var<Real> relu(Var<Real> a) {
  Tensor<Real> out = a.value();
  for (auto& x : out.values()) x = x > Real(0) ? x : Real(0);
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [ia](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    const Tensor<Real>& va = t.value(ia);
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (va[i] > Real(0)) ga[i] += g[i];
    }
  });
}

template <class Real>
Var<Real> tanh(Var<Real> a) {
  Tensor<Real> out = a.value();
  for (auto& x : out.values()) x = std::tanh(x);
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [ia](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    const Tensor<Real>& y = t.value(self);
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (Real(1) - y[i] * y[i]);
  });
}

// ---- products and layout ----------------------------------------------------------

template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  const Tensor<Real>& va = a.value();
  const Tensor<Real>& vb = b.value();
  Tensor<Real> out = lgnmt::matmul(va, vb);
  const std::size_t m = va.extent(-2), k = va.extent(-1), n = vb.extent(-1);
  const std::size_t batch = va.size() / (m * k);
  const bool shared_b = vb.rank() == 2;
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape()->push(std::move(out), {a, b}, [=](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    const Tensor<Real>& va = t.value(ia);
    const Tensor<Real>& vb = t.value(ib);
    if (shared_b) {
      if (t.requires_grad(ia)) kernels::gemm_nt(g.data(), vb.data(), t.grad_buffer(ia).data(), batch * m, n, k, true);
      if (t.requires_grad(ib)) kernels::gemm_tn(va.data(), g.data(), t.grad_buffer(ib).data(), batch * m, k, n, true);
      return;
    }
    for (std::size_t i = 0; i < batch; ++i) {
      const Real* gi = g.data() + i * m * n;
      if (t.requires_grad(ia)) {
        kernels::gemm_nt(gi, vb.data() + i * k * n, t.grad_buffer(ia).data() + i * m * k, m, n, k, true);
      }
      if (t.requires_grad(ib)) {
        kernels::gemm_tn(va.data() + i * m * k, gi, t.grad_buffer(ib).data() + i * k * n, m, k, n, true);
      }
    }
  });
}

template <class Real>
Var<Real> matmul_nt(Var<Real> a, Var<Real> b) {
  const Tensor<Real>& va = a.value();
  const Tensor<Real>& vb = b.value();
  if (va.rank() < 2 || va.rank() != vb.rank() || va.extent(-1) != vb.extent(-1) ||
      !std::equal(va.shape().begin(), va.shape().end() - 2, vb.shape().begin())) {
    throw ShapeError("matmul_nt shape mismatch: " + shape_str(va.shape()) + " x " + shape_str(vb.shape()) + "^T");
  }
  const std::size_t m = va.extent(-2), k = va.extent(-1), n = vb.extent(-2);
  const std::size_t batch = va.size() / (m * k);
  Shape out_shape(va.shape().begin(), va.shape().end() - 1);
  out_shape.push_back(n);
  Tensor<Real> out(out_shape);
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm_nt(va.data() + i * m * k, vb.data() + i * n * k, out.data() + i * m * n, m, k, n, false);
  }
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape()->push(std::move(out), {a, b}, [=](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    const Tensor<Real>& va = t.value(ia);
    const Tensor<Real>& vb = t.value(ib);
    for (std::size_t i = 0; i < batch; ++i) {
      const Real* gi = g.data() + i * m * n;
      if (t.requires_grad(ia)) {
        kernels::gemm_nn(gi, vb.data() + i * n * k, t.grad_buffer(ia).data() + i * m * k, m, n, k, true);
      }
      if (t.requires_grad(ib)) {
        kernels::gemm_tn(gi, va.data() + i * m * k, t.grad_buffer(ib).data() + i * n * k, m, n, k, true);
      }
    }
  });
}

template <class Real>
Var<Real> transpose(Var<Real> a) {
  const Tensor<Real>& va = a.value();
  if (va.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(va.shape()));
  const std::size_t r = va.extent(-2), c = va.extent(-1);
  const std::size_t batch = va.size() / (r * c);
  Shape shape = va.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Tensor<Real> out(shape);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = va[b * r * c + i * c + j];
    }
  }
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [=](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) ga[b * r * c + i * c + j] += g[b * r * c + j * r + i];
      }
    }
  });
}

template <class Real>
Var<Real> reshape(Var<Real> a, Shape shape) {
  Tensor<Real> out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [ia](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <class Real>
Var<Real> split_heads(Var<Real> a, std::size_t heads) {
  const Tensor<Real>& va = a.value();
  if (va.rank() != 3 || heads == 0 || va.extent(2) % heads != 0) {
    throw ShapeError("split_heads: cannot split " + shape_str(va.shape()) + " into " + std::to_string(heads) + " heads");
  }
  const std::size_t B = va.extent(0), T = va.extent(1), D = va.extent(2) / heads, H = heads;
  Tensor<Real> out(Shape{B, H, T, D});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < H; ++h)
        std::copy_n(va.data() + ((b * T + t) * H + h) * D, D, out.data() + ((b * H + h) * T + t) * D);
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [=](Tape<Real>& tp, std::size_t self) {
    const Tensor<Real>& g = tp.grad_of(self);
    Tensor<Real>& ga = tp.grad_buffer(ia);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < H; ++h) {
          const Real* src = g.data() + ((b * H + h) * T + t) * D;
          Real* dst = ga.data() + ((b * T + t) * H + h) * D;
          for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
        }
  });
}

template <class Real>
Var<Real> merge_heads(Var<Real> a) {
  const Tensor<Real>& va = a.value();
  if (va.rank() != 4) throw ShapeError("merge_heads expects [B, H, T, D], got " + shape_str(va.shape()));
  const std::size_t B = va.extent(0), H = va.extent(1), T = va.extent(2), D = va.extent(3);
  Tensor<Real> out(Shape{B, T, H * D});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t t = 0; t < T; ++t)
        std::copy_n(va.data() + ((b * H + h) * T + t) * D, D, out.data() + ((b * T + t) * H + h) * D);
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [=](Tape<Real>& tp, std::size_t self) {
    const Tensor<Real>& g = tp.grad_of(self);
    Tensor<Real>& ga = tp.grad_buffer(ia);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t t = 0; t < T; ++t) {
          const Real* src = g.data() + ((b * T + t) * H + h) * D;
          Real* dst = ga.data() + ((b * H + h) * T + t) * D;
          for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
        }
  });
}

// ---- normalisation ----------------------------------------------------------

template <class Real>
Var<Real> softmax(Var<Real> a, std::ptrdiff_t axis) {
  const Tensor<Real>& va = a.value();
  const std::size_t ax = normalize_axis(axis, va.rank());
  const std::size_t len = va.shape()[ax];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < va.rank(); ++i) inner *= va.shape()[i];
  const std::size_t outer = len == 0 ? 0 : va.size() / (len * inner);

  Tensor<Real> out(va.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, va[base + i * inner]);
      if (mx == -std::numeric_limits<Real>::infinity()) continue;  // fully masked slice
      Real total = 0;
      for (std::size_t i = 0; i < len; ++i) {
        const Real e = std::exp(va[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [=](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    const Tensor<Real>& y = t.value(self);
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        Real dot = 0;
        for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t j = base + i * inner;
          ga[j] += y[j] * (g[j] - dot);
        }
      }
    }
  });
}

template <class Real>
Var<Real> mask_attention(Var<Real> scores, std::span<const std::size_t> key_lengths, bool causal) {
  const Tensor<Real>& vs = scores.value();
  if (vs.rank() != 4 || key_lengths.size() != vs.extent(0)) {
    throw ShapeError("mask_attention expects [B, H, T, S] scores and B key lengths, got " + shape_str(vs.shape()));
  }
  const std::size_t B = vs.extent(0), H = vs.extent(1), T = vs.extent(2), S = vs.extent(3);
  std::vector<unsigned char> keep(vs.size(), 1);
  Tensor<Real> out = vs;
  const Real neg_inf = -std::numeric_limits<Real>::infinity();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t s = 0; s < S; ++s) {
          if (s >= key_lengths[b] || (causal && s > t)) {
            const std::size_t j = ((b * H + h) * T + t) * S + s;
            keep[j] = 0;
            out[j] = neg_inf;
          }
        }
  const std::size_t ia = scores.index();
  return scores.tape()->push(std::move(out), {scores}, [ia, keep = std::move(keep)](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (keep[i]) ga[i] += g[i];
    }
  });
}

template <class Real>
Var<Real> layer_norm(Var<Real> x, Var<Real> gain, Var<Real> bias, Real eps) {
  const Tensor<Real>& vx = x.value();
  const Tensor<Real>& vg = gain.value();
  const Tensor<Real>& vb = bias.value();
  const std::size_t D = vx.extent(-1);
  if (vg.shape() != Shape{D} || vb.shape() != Shape{D}) {
    throw ShapeError("layer_norm gain/bias must be [" + std::to_string(D) + "], got " + shape_str(vg.shape()) +
                     " and " + shape_str(vb.shape()));
  }
  const std::size_t rows = vx.size() / D;
  Tensor<Real> out(vx.shape());
  std::vector<Real> xhat(vx.size());
  std::vector<Real> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = vx.data() + r * D;
    Real mu = 0;
    for (std::size_t d = 0; d < D; ++d) mu += row[d];
    mu /= static_cast<Real>(D);
    Real var = 0;
    for (std::size_t d = 0; d < D; ++d) var += (row[d] - mu) * (row[d] - mu);
    var /= static_cast<Real>(D);
    const Real rs = Real(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t d = 0; d < D; ++d) {
      const Real xh = (row[d] - mu) * rs;
      xhat[r * D + d] = xh;
      out[r * D + d] = vg[d] * xh + vb[d];
    }
  }
  const std::size_t ix = x.index(), ig = gain.index(), ib = bias.index();
  return x.tape()->push(std::move(out), {x, gain, bias},
                        [=, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<Real>& t, std::size_t self) {
                          const Tensor<Real>& g = t.grad_of(self);
                          const Tensor<Real>& vg = t.value(ig);
                          if (t.requires_grad(ib)) {
                            Tensor<Real>& gb = t.grad_buffer(ib);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i % D] += g[i];
                          }
                          if (t.requires_grad(ig)) {
                            Tensor<Real>& gg = t.grad_buffer(ig);
                            for (std::size_t i = 0; i < g.size(); ++i) gg[i % D] += g[i] * xhat[i];
                          }
                          if (!t.requires_grad(ix)) return;
                          Tensor<Real>& gx = t.grad_buffer(ix);
                          for (std::size_t r = 0; r < rows; ++r) {
                            Real mean_gh = 0, mean_ghx = 0;
                            for (std::size_t d = 0; d < D; ++d) {
                              const Real gh = g[r * D + d] * vg[d];
                              mean_gh += gh;
                              mean_ghx += gh * xhat[r * D + d];
                            }
                            mean_gh /= static_cast<Real>(D);
                            mean_ghx /= static_cast<Real>(D);
                            for (std::size_t d = 0; d < D; ++d) {
                              const Real gh = g[r * D + d] * vg[d];
                              gx[r * D + d] += rstd[r] * (gh - mean_gh - xhat[r * D + d] * mean_ghx);
                            }
                          }
                        });
}

// ---- lookup / regularisation / reductions -------------------------------------------

template <class Real>
Var<Real> embedding(Var<Real> table, std::span<const std::int32_t> ids, Shape index_shape) {
  const Tensor<Real>& vt = table.value();
  if (vt.rank() != 2) throw ShapeError("embedding table must be [V, D], got " + shape_str(vt.shape()));
  if (shape_numel(index_shape) != ids.size()) {
    throw ShapeError("embedding index shape " + shape_str(index_shape) + " does not match " +
                     std::to_string(ids.size()) + " ids");
  }
  const std::size_t V = vt.extent(0), D = vt.extent(1);
  Shape out_shape = index_shape;
  out_shape.push_back(D);
  Tensor<Real> out(out_shape);
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= V) {
      throw RangeError("token id " + std::to_string(rows[i]) + " outside embedding of size " + std::to_string(V));
    }
    std::copy_n(vt.data() + static_cast<std::size_t>(rows[i]) * D, D, out.data() + i * D);
  }
  const std::size_t it = table.index();
  return table.tape()->push(std::move(out), {table}, [it, D, rows = std::move(rows)](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    Tensor<Real>& gt = t.grad_buffer(it);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Real* dst = gt.data() + static_cast<std::size_t>(rows[i]) * D;
      const Real* src = g.data() + i * D;
      for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
    }
  });
}

template <class Real>
Var<Real> dropout(Var<Real> a, Real rate, SplitMix64& rng) {
  if (rate <= Real(0)) return a;
  if (rate >= Real(1)) throw ConfigError("dropout rate must be below 1");
  const Real keep_scale = Real(1) / (Real(1) - rate);
  Tensor<Real> out = a.value();
  std::vector<Real> mask(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() >= static_cast<double>(rate) ? keep_scale : Real(0);
    out[i] *= mask[i];
  }
  const std::size_t ia = a.index();
  return a.tape()->push(std::move(out), {a}, [ia, mask = std::move(mask)](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad_of(self);
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

template <class Real>
Var<Real> sum(Var<Real> a) {
  Real total = 0;
  for (Real x : a.value().values()) total += x;
  const std::size_t ia = a.index();
  return a.tape()->push(Tensor<Real>::scalar(total), {a}, [ia](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad_of(self)[0];
    Tensor<Real>& ga = t.grad_buffer(ia);
    for (auto& x : ga.values()) x += g;
  });
}

template <class Real>
Var<Real> mean(Var<Real> a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), Real(1) / static_cast<Real>(n));
}

template <class Real>
Var<Real> cross_entropy(Var<Real> logits, std::span<const std::int32_t> targets, std::int32_t pad_id) {
  const Tensor<Real>& vl = logits.value();
  const std::size_t V = vl.extent(-1);
  const std::size_t rows = vl.size() / V;
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(vl.shape()));
  }
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int32_t target = targets[r];
    if (target == pad_id) continue;
    if (target < 0 || static_cast<std::size_t>(target) >= V) {
      throw RangeError("target id " + std::to_string(target) + " outside vocabulary of size " + std::to_string(V));
    }
    const Real* row = vl.data() + r * V;
    const Real mx = *std::max_element(row, row + V);
    double z = 0;
    for (std::size_t v = 0; v < V; ++v) z += std::exp(static_cast<double>(row[v] - mx));
    total += static_cast<double>(mx) + std::log(z) - static_cast<double>(row[target]);
    ++count;
  }
  if (count == 0) throw Error("cross_entropy: every target position is padding");
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  const std::size_t il = logits.index();
  return logits.tape()->push(
      Tensor<Real>::scalar(static_cast<Real>(total / static_cast<double>(count))), {logits},
      [=, tgt = std::move(tgt)](Tape<Real>& t, std::size_t self) {
        const Real g = t.grad_of(self)[0] / static_cast<Real>(count);
        const Tensor<Real>& vl = t.value(il);
        Tensor<Real>& gl = t.grad_buffer(il);
        for (std::size_t r = 0; r < rows; ++r) {
          if (tgt[r] == pad_id) continue;
          const Real* row = vl.data() + r * V;
          Real* grow = gl.data() + r * V;
          const Real mx = *std::max_element(row, row + V);
          Real z = 0;
          for (std::size_t v = 0; v < V; ++v) z += std::exp(row[v] - mx);
          for (std::size_t v = 0; v < V; ++v) grow[v] += g * std::exp(row[v] - mx) / z;
          grow[tgt[r]] -= g;
        }
      });
}

// ---- gradient checking ---------------------------------------------------------

template <class Real>
double finite_difference_check(const LossBuilder<Real>& loss, std::span<Parameter<Real>* const> params, Real h) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<Real> tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    Tape<Real> tape(false);
    return static_cast<double>(loss(tape).value()[0]);
  };
  double worst = 0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const Real original = p->value[i];
      p->value[i] = original + h;
      const double up = evaluate();
      p->value[i] = original - h;
      const double down = evaluate();
      p->value[i] = original;
      const double fd = (up - down) / (2.0 * static_cast<double>(h));
      const double ad = static_cast<double>(p->grad[i]);
      const double err = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-8});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// ---- explicit instantiations ----------------------------------------------------

#define LGNMT_INSTANTIATE_OPS(R)                                                                      \
  template Var<R> add(Var<R>, Var<R>);                                                                \
  template Var<R> mul(Var<R>, Var<R>);                                                                \
  template Var<R> scale(Var<R>, R);                                                                   \
  template Var<R> relu(Var<R>);                                                                       \
  template Var<R> tanh(Var<R>);                                                                       \
  template Var<R> matmul(Var<R>, Var<R>);                                                             \
  template Var<R> matmul_nt(Var<R>, Var<R>);                                                          \
  template Var<R> transpose(Var<R>);                                                                  \
  template Var<R> reshape(Var<R>, Shape);                                                             \
  template Var<R> split_heads(Var<R>, std::size_t);                                                   \
  template Var<R> merge_heads(Var<R>);                                                                \
  template Var<R> softmax(Var<R>, std::ptrdiff_t);                                                    \
  template Var<R> mask_attention(Var<R>, std::span<const std::size_t>, bool);                         \
  template Var<R> layer_norm(Var<R>, Var<R>, Var<R>, R);                                              \
  template Var<R> embedding(Var<R>, std::span<const std::int32_t>, Shape);                            \
  template Var<R> dropout(Var<R>, R, SplitMix64&);                                                    \
  template Var<R> sum(Var<R>);                                                                        \
  template Var<R> mean(Var<R>);                                                                       \
  template Var<R> cross_entropy(Var<R>, std::span<const std::int32_t>, std::int32_t);                 \
  template double finite_difference_check(const LossBuilder<R>&, std::span<Parameter<R>* const>, R);

LGNMT_INSTANTIATE_OPS(float)
LGNMT_INSTANTIATE_OPS(double)

#undef LGNMT_INSTANTIATE_OPS

}  // namespace lgnmt
