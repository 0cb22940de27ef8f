#include <doctest.h>

#include <cmath>

#include "lgnmt/errors.hpp"
#include "lgnmt/random.hpp"
#include "lgnmt/tensor.hpp"

using namespace lgnmt;

namespace {

template <class Real>
Tensor<Real> random_tensor(Shape shape, SplitMix64& rng) {
  Tensor<Real> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Real>(rng.uniform() * 2 - 1);
  return t;
}

// Triple loop in long double.
template <class Real>
std::vector<long double> naive_matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<long double> c(m * n, 0.0L);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += static_cast<long double>(a[i * k + p]) * b[p * n + j];
  return c;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("construction and indexing") {
  Tensor<double> t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at({1, 2}) == 6);
  CHECK(t.extent(-1) == 3);
  CHECK(t.reshaped({3, 2}).at({2, 0}) == 5);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK(shape_str({2, 3}) == "[2, 3]");
}

TEST_CASE("matmul examples") {
  const Tensor<double> a({2, 2}, {1, 2, 3, 4});
  const Tensor<double> b({2, 1}, {5, 6});
  CHECK(matmul(a, b) == Tensor<double>({2, 1}, {17, 39}));

  const Tensor<double> eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  SplitMix64 rng(1);
  const auto m = random_tensor<double>({3, 4}, rng);
  CHECK(matmul(eye, m) == m);
}

TEST_CASE("matmul shape errors name both shapes") {
  try {
    matmul(Tensor<float>({2, 3}), Tensor<float>({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2, 3]") != std::string::npos);
  }
}

TEST_CASE("matmul against a naive oracle") {
  SplitMix64 rng(2);
  for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {5, 7, 3}, {16, 33, 9}, {64, 64, 64}}) {
    const auto a32 = random_tensor<float>({m, k}, rng);
    const auto b32 = random_tensor<float>({k, n}, rng);
    const auto c32 = matmul(a32, b32);
    const auto ref32 = naive_matmul(a32, b32);
    for (std::size_t i = 0; i < ref32.size(); ++i) CHECK(std::abs(c32[i] - ref32[i]) <= 1e-6L * (1 + k));

    const auto a64 = random_tensor<double>({m, k}, rng);
    const auto b64 = random_tensor<double>({k, n}, rng);
    const auto c64 = matmul(a64, b64);
    const auto ref64 = naive_matmul(a64, b64);
    for (std::size_t i = 0; i < ref64.size(); ++i) CHECK(std::abs(c64[i] - ref64[i]) <= 1e-12L * (1 + k));
  }
}

TEST_CASE("batched matmul") {
  SplitMix64 rng(3);
  const auto a = random_tensor<double>({2, 3, 4}, rng);
  const auto b = random_tensor<double>({4, 5}, rng);
  const auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 3, 5});
  const Tensor<double> a1({3, 4}, std::vector<double>(a.data() + 12, a.data() + 24));
  const auto c1 = matmul(a1, b);
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c[15 + i] == c1[i]);
}

TEST_CASE("gemm kernels agree with each other") {
  SplitMix64 rng(4);
  const std::size_t m = 7, k = 5, n = 6;
  const auto a = random_tensor<double>({m, k}, rng);
  const auto b = random_tensor<double>({k, n}, rng);
  std::vector<double> bt(n * k), at(k * m), c1(m * n), c2(m * n), c3(m * n);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
  kernels::gemm_nn(a.data(), b.data(), c1.data(), m, k, n, false);
  kernels::gemm_nt(a.data(), bt.data(), c2.data(), m, k, n, false);
  kernels::gemm_tn(at.data(), b.data(), c3.data(), k, m, n, false);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
    CHECK(c1[i] == doctest::Approx(c3[i]).epsilon(1e-12));
  }
  kernels::gemm_nn(a.data(), b.data(), c1.data(), m, k, n, true);
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == doctest::Approx(2 * c2[i]).epsilon(1e-12));
}

}  // TEST_SUITE
