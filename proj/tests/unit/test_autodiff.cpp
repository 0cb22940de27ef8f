#include <doctest.h>

#include <cmath>
#include <limits>

#include "lgnmt/autodiff.hpp"
#include "lgnmt/errors.hpp"

using namespace lgnmt;
using T = Tensor<double>;

namespace {

Parameter<double> param(const char* name, Shape shape, std::uint64_t seed) {
  SplitMix64 rng(seed);
  T v(std::move(shape));
  for (auto& x : v.values()) x = rng.uniform() * 2 - 1;
  return {name, v};
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("softmax examples") {
  Tape<double> tape(false);
  const auto u = softmax(tape.constant(T({4}, {0.3, 0.3, 0.3, 0.3}))).value();
  for (double p : u.values()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  const auto s = softmax(tape.constant(T({2}, {0.0, std::log(3.0)}))).value();
  CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-14));
  const auto big = softmax(tape.constant(T({2}, {1000.0, 1000.0}))).value();
  CHECK(big[0] == doctest::Approx(0.5));
  const double ninf = -std::numeric_limits<double>::infinity();
  const auto dead = softmax(tape.constant(T({2}, {ninf, ninf}))).value();
  CHECK(dead[0] == 0.0);
}

TEST_CASE("layer norm") {
  Tape<double> tape(false);
  const auto gain = tape.constant(T({4}, 1.0));
  const auto bias = tape.constant(T({4}, {0.5, -1, 2, 0}));
  const auto c = layer_norm(tape.constant(T({4}, 7.0)), gain, bias).value();
  CHECK(c == T({4}, {0.5, -1, 2, 0}));

  const auto zero = tape.constant(T({64}, 0.0));
  T x({64});
  SplitMix64 rng(3);
  for (auto& v : x.values()) v = rng.uniform() * 10 - 3;
  const auto y = layer_norm(tape.constant(x), tape.constant(T({64}, 1.0)), zero).value();
  double m = 0, var = 0;
  for (double v : y.values()) m += v;
  m /= 64;
  for (double v : y.values()) var += (v - m) * (v - m);
  var /= 64;
  CHECK(std::abs(m) < 1e-9);
  CHECK(std::abs(var - 1) < 1e-4);
}

TEST_CASE("backward basics") {
  Tape<double> tape;
  const T xv({3}, {1, -2, 0.5});
  auto x = tape.variable(xv);
  tape.backward(sum(x));
  CHECK(tape.grad(x) == T({3}, 1.0));

  Tape<double> t2;
  auto y = t2.variable(xv);
  auto loss = sum(mul(y, y));
  t2.backward(loss);
  CHECK(t2.grad(y) == T({3}, {2, -4, 1}));
  CHECK(t2.last_backward_visits() == t2.size());

  Tape<double> t3;
  auto z = t3.variable(xv);
  CHECK_THROWS_AS(t3.backward(z), ShapeError);
}

TEST_CASE("gradients accumulate into parameters") {
  auto p = param("w", {2, 2}, 1);
  for (int i = 0; i < 2; ++i) {
    Tape<double> tape;
    tape.backward(sum(tape.parameter(p)));
  }
  CHECK(p.grad == T({2, 2}, 2.0));
  p.zero_grad();
  CHECK(p.grad == T({2, 2}, 0.0));
}

TEST_CASE("non-recording tape stores no backward closures") {
  auto p = param("w", {3}, 1);
  Tape<double> tape(false);
  const auto v = tape.parameter(p);
  CHECK_FALSE(tape.requires_grad(mul(v, v).index()));
}

TEST_CASE("finite differences: quadratic is exact") {
  auto a = param("a", {3, 3}, 2);
  std::vector<Parameter<double>*> ps{&a};
  LossBuilder<double> f = [&](Tape<double>& tape) {
    auto x = tape.parameter(a);
    return sum(mul(x, x));
  };
  CHECK(finite_difference_check<double>(f, ps, 1e-4) < 1e-8);
}

TEST_CASE("finite differences: every op") {
  auto w = param("w", {4, 6}, 3);
  auto x = param("x", {2, 3, 4}, 4);
  auto g = param("g", {6}, 5);
  auto b = param("b", {6}, 6);
  auto e = param("e", {5, 4}, 7);
  std::vector<Parameter<double>*> ps{&w, &x, &g, &b, &e};
  const std::vector<std::int32_t> ids{1, 4, 0, 2, 3, 0};
  const std::vector<std::int32_t> targets{1, 0, 5, 2, 0, 3};
  const std::vector<std::size_t> lengths{3, 2};
  LossBuilder<double> f = [&](Tape<double>& tape) {
    auto xv = add(tape.parameter(x), embedding(tape.parameter(e), ids, {2, 3}));
    auto h = matmul(xv, tape.parameter(w));                                   // [2,3,6]
    h = layer_norm(tanh(h), tape.parameter(g), tape.parameter(b));
    auto heads = split_heads(h, 2);                                           // [2,2,3,3]
    auto scores = scale(matmul_nt(heads, heads), 0.5);
    auto attn = softmax(mask_attention(scores, lengths, true));
    auto ctx = merge_heads(matmul(attn, heads));                              // [2,3,6]
    auto r = add(relu(ctx), transpose(transpose(h)));
    return add(cross_entropy(r, targets, 0), scale(mean(reshape(r, {36})), 0.1));
  };
  CHECK(finite_difference_check<double>(f, ps, 1e-6) < 1e-6);
}

TEST_CASE("finite differences: a too-large step is visible") {
  auto a = param("a", {4}, 8);
  std::vector<Parameter<double>*> ps{&a};
  LossBuilder<double> f = [&](Tape<double>& tape) {
    auto x = tape.parameter(a);
    return sum(mul(mul(x, x), x));
  };
  const double good = finite_difference_check<double>(f, ps, 1e-5);
  const double bad = finite_difference_check<double>(f, ps, 1.0);
  CHECK(good < 1e-8);
  CHECK(bad > 1e-2);
  CHECK(bad > 1e4 * good);
}

TEST_CASE("cross entropy") {
  Tape<double> tape(false);
  const std::vector<std::int32_t> t{3};
  CHECK(cross_entropy(tape.constant(T({1, 8}, 0.0)), t, 0).value()[0] == doctest::Approx(std::log(8.0)).epsilon(1e-15));
  T sat({1, 8}, 0.0);
  sat[3] = 30;
  CHECK(cross_entropy(tape.constant(sat), t, 0).value()[0] < 1e-9);
  const std::vector<std::int32_t> pads{0, 0};
  CHECK_THROWS_AS(cross_entropy(tape.constant(T({2, 8}, 0.0)), pads, 0), Error);
}

TEST_CASE("dropout") {
  SplitMix64 rng(1);
  Tape<double> tape(false);
  const T x({1000}, 1.0);
  CHECK(dropout(tape.constant(x), 0.0, rng).value() == x);
  const auto y = dropout(tape.constant(x), 0.5, rng).value();
  std::size_t zeros = 0;
  for (double v : y.values()) {
    CHECK((v == 0.0 || v == 2.0));
    zeros += v == 0.0;
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);
}

}  // TEST_SUITE
