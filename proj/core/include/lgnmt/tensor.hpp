#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lgnmt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape) noexcept;

// Dense row-major tensor. Real is float for training and double for the
// gradient-check tests; both are explicitly instantiated in tensor.cpp.
template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  // Negative axes count from the end.
  std::size_t extent(std::ptrdiff_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }

  Real& at(std::initializer_list<std::size_t> index);
  Real at(std::initializer_list<std::size_t> index) const;

  // Same data, new shape with the same element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(Real v) noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<Real> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

// Row-major GEMM kernels on raw buffers, backed by Eigen's single-threaded
// product (deterministic for a given build and shape).
namespace kernels {

// C[m,n] (+)= A[m,k] * B[k,n]
template <class Real>
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <class Real>
void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// C[k,n] (+)= A[m,k]^T * B[m,n]
template <class Real>
void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

}  // namespace kernels

// Plain (non-differentiable) matrix product with the same shape rules as the
// tape op: a is [..., m, k]; b is [k, n] or [..., k, n] with a's batch dims.
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

}  // namespace lgnmt
