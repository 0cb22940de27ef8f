#include "lgnmt/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include <Eigen/Core>

#include "lgnmt/errors.hpp"

namespace lgnmt {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <class Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor of shape " + shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

template <class Real>
std::size_t Tensor<Real>::extent(std::ptrdiff_t axis) const {
  const auto r = static_cast<std::ptrdiff_t>(shape_.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

template <class Real>
std::size_t Tensor<Real>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index rank does not match shape " + shape_str(shape_));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw RangeError("index out of range for shape " + shape_str(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template <class Real>
Real& Tensor<Real>::at(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

template <class Real>
Real Tensor<Real>::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

template <class Real>
Tensor<Real> Tensor<Real>::reshaped(Shape shape) const& {
  return Tensor(*this).reshaped(std::move(shape));
}

template <class Real>
Tensor<Real> Tensor<Real>::reshaped(Shape shape) && {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

template <class Real>
void Tensor<Real>::fill(Real v) noexcept {
  std::fill(data_.begin(), data_.end(), v);
}

template class Tensor<float>;
template class Tensor<double>;

namespace kernels {

template <class Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using ConstMap = Eigen::Map<const RowMatrix<Real>>;
template <class Real>
using MutMap = Eigen::Map<RowMatrix<Real>>;

// Eigen's single-threaded product uses a fixed blocking for given sizes, so
// results are reproducible run to run.
template <class Real>
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap<Real> C(c, M, N);
  if (k == 0) {
    if (!accumulate) C.setZero();
    return;
  }
  if (accumulate) {
    C.noalias() += ConstMap<Real>(a, M, K) * ConstMap<Real>(b, K, N);
  } else {
    C.noalias() = ConstMap<Real>(a, M, K) * ConstMap<Real>(b, K, N);
  }
}

template <class Real>
void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap<Real> C(c, M, N);
  if (k == 0) {
    if (!accumulate) C.setZero();
    return;
  }
  if (accumulate) {
    C.noalias() += ConstMap<Real>(a, M, K) * ConstMap<Real>(b, N, K).transpose();
  } else {
    C.noalias() = ConstMap<Real>(a, M, K) * ConstMap<Real>(b, N, K).transpose();
  }
}

template <class Real>
void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap<Real> C(c, K, N);
  if (m == 0) {
    if (!accumulate) C.setZero();
    return;
  }
  if (accumulate) {
    C.noalias() += ConstMap<Real>(a, M, K).transpose() * ConstMap<Real>(b, M, N);
  } else {
    C.noalias() = ConstMap<Real>(a, M, K).transpose() * ConstMap<Real>(b, M, N);
  }
}

template void gemm_nn<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nn<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nt<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nt<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_tn<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_tn<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);

}  // namespace kernels

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.extent(-2);
  const std::size_t k = a.extent(-1);
  const std::size_t n = b.extent(-1);
  if (b.extent(-2) != k) {
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  Tensor<Real> out(out_shape);
  const std::size_t batch = a.size() / (m * k);
  if (b.rank() == 2) {
    kernels::gemm_nn(a.data(), b.data(), out.data(), batch * m, k, n, false);
    return out;
  }
  if (!std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin(), b.shape().end() - 2)) {
    throw ShapeError("matmul batch dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm_nn(a.data() + i * m * k, b.data() + i * k * n, out.data() + i * m * n, m, k, n, false);
  }
  return out;
}

template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);

}  // namespace lgnmt
