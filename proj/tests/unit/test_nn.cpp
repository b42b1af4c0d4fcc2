#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "../support/gradcheck.hpp"
#include "../support/op_cases.hpp"
#include "mpa/error.hpp"
#include "mpa/nn/adam.hpp"
#include "mpa/nn/kernels.hpp"
#include "mpa/nn/ops.hpp"
#include "mpa/nn/rng.hpp"

using namespace mpa;
using namespace mpa::nn;
using mpa::testing::op_gradient_error;
using mpa::testing::random_tensor;
using kernels::Gemm;

namespace {

constexpr double kOpTol = 1e-3;

ParameterStore store_of(std::initializer_list<Tensor> ts) {
  ParameterStore s;
  int i = 0;
  for (const auto& t : ts) s.add("p" + std::to_string(i++), t);
  return s;
}

// Naive triple loop in double, the oracle for the blocked kernels.
std::vector<double> naive_gemm(const Gemm& g, const std::vector<float>& a, const std::vector<float>& b) {
  std::vector<double> c(g.m * g.n, 0.0);
  for (std::size_t i = 0; i < g.m; ++i)
    for (std::size_t j = 0; j < g.n; ++j)
      for (std::size_t p = 0; p < g.k; ++p) {
        const double av = g.trans_a ? a[p * g.m + i] : a[i * g.k + p];
        const double bv = g.trans_b ? b[j * g.k + p] : b[p * g.n + j];
        c[i * g.n + j] += av * bv;
      }
  return c;
}

}  // namespace

TEST_CASE("gemm kernels match a naive oracle and each other bit for bit") {
  std::mt19937_64 rng(11);
  for (bool ta : {false, true})
    for (bool tb : {false, true})
      for (auto [m, n, k] : {std::tuple{1, 1, 1}, {7, 5, 3}, {33, 17, 65}, {70, 130, 40}}) {
        Gemm g{ta, tb, std::size_t(m), std::size_t(n), std::size_t(k), false};
        auto a = random_tensor({g.m * g.k}, rng).storage();
        auto b = random_tensor({g.k * g.n}, rng).storage();
        std::vector<float> cs(g.m * g.n, 0.0f), cp(g.m * g.n, 0.0f);
        kernels::serial::gemm(g, a.data(), b.data(), cs.data());
        kernels::omp::gemm(g, a.data(), b.data(), cp.data());
        CHECK(cs == cp);
        const auto oracle = naive_gemm(g, a, b);
        for (std::size_t i = 0; i < cs.size(); ++i) CHECK(cs[i] == doctest::Approx(oracle[i]).epsilon(1e-5));
      }
}

TEST_CASE("gemm accumulate adds into C") {
  Gemm g{false, false, 2, 2, 2, true};
  std::vector<float> a{1, 2, 3, 4}, b{1, 0, 0, 1}, c{10, 10, 10, 10};
  kernels::serial::gemm(g, a.data(), b.data(), c.data());
  CHECK(c == std::vector<float>{11, 12, 13, 14});
}

TEST_CASE("softmax basics") {
  Tape tape(false);
  auto x = tape.constant(Tensor({1, 3}, {1, 1, 1}));
  auto y = softmax(x, 1).value();
  for (float v : y.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-7));

  std::mt19937_64 rng(3);
  auto r = random_tensor({4, 9}, rng, -5, 5);
  Tensor shifted = r;
  for (auto& v : shifted.storage()) v += 123.0f;
  auto a = softmax(tape.constant(r), 1).value();
  auto b = softmax(tape.constant(shifted), 1).value();
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-4));
  for (std::size_t row = 0; row < 4; ++row) {
    double s = 0.0;
    for (float v : a.row(row)) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }

  // Huge logits stay finite thanks to max subtraction.
  auto big = softmax(tape.constant(Tensor({1, 2}, {1e30f, 0.0f})), 1).value();
  CHECK(big[0] == 1.0f);
  CHECK(big[1] == 0.0f);
}

TEST_CASE("softmax along axis 0 normalizes columns") {
  Tape tape(false);
  std::mt19937_64 rng(4);
  auto y = softmax(tape.constant(random_tensor({5, 3}, rng)), 0).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < 5; ++r) s += y.at(r, c);
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm of a constant row is zero before the affine part") {
  Tape tape(false);
  auto x = tape.constant(Tensor({2, 4}, {3, 3, 3, 3, -1, -1, -1, -1}));
  auto g = tape.constant(Tensor({4}, 1.0f));
  auto b = tape.constant(Tensor({4}, 0.0f));
  for (float v : layer_norm(x, g, b).value().data()) CHECK(v == 0.0f);
}

TEST_CASE("layer_norm matches a double oracle") {
  std::mt19937_64 rng(5);
  auto xv = random_tensor({3, 6}, rng, -2, 2);
  auto gv = random_tensor({6}, rng);
  auto bv = random_tensor({6}, rng);
  Tape tape(false);
  auto y = layer_norm(tape.constant(xv), tape.constant(gv), tape.constant(bv)).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (float v : xv.row(r)) mean += v;
    mean /= 6;
    for (float v : xv.row(r)) var += (v - mean) * (v - mean);
    var /= 6;
    for (std::size_t c = 0; c < 6; ++c) {
      const double expect = (xv.at(r, c) - mean) / std::sqrt(var + 1e-5) * gv[c] + bv[c];
      CHECK(y.at(r, c) == doctest::Approx(expect).epsilon(1e-5));
    }
  }
}

TEST_CASE("gelu uses the exact erf form") {
  Tape tape(false);
  const std::vector<float> xs{-3.0f, -0.5f, 0.0f, 0.7f, 2.5f};
  auto y = gelu(tape.constant(Tensor({1, xs.size()}, xs))).value();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i];
    CHECK(y[i] == doctest::Approx(0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)))).epsilon(1e-6));
  }
}

TEST_CASE("conv1d matches a direct loop oracle") {
  std::mt19937_64 rng(6);
  const std::size_t t = 9, cin = 3, cout = 4, k = 5;
  auto x = random_tensor({t, cin}, rng);
  auto w = random_tensor({k, cin, cout}, rng);
  auto b = random_tensor({cout}, rng);
  for (std::size_t stride : {1u, 2u}) {
    Tape tape(false);
    auto y = conv1d(tape.constant(x), tape.constant(w), tape.constant(b), stride).value();
    const std::size_t tout = (t + stride - 1) / stride;
    REQUIRE(y.rows() == tout);
    CHECK(conv1d_output_length(t, stride) == tout);
    const long pad = (k - 1) / 2;
    for (std::size_t o = 0; o < tout; ++o)
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = b[co];
        for (std::size_t kk = 0; kk < k; ++kk) {
          const long src = long(o * stride) + long(kk) - pad;
          if (src < 0 || src >= long(t)) continue;
          for (std::size_t ci = 0; ci < cin; ++ci)
            acc += double(x.at(src, ci)) * w[(kk * cin + ci) * cout + co];
        }
        CHECK(y.at(o, co) == doctest::Approx(acc).epsilon(1e-5));
      }
  }
}

TEST_CASE("cross_entropy against a scalar log-sum-exp oracle") {
  std::mt19937_64 rng(7);
  auto logits = random_tensor({4, 7}, rng, -3, 3);
  const std::vector<int> targets{0, 6, 3, 2};
  const std::vector<bool> mask{true, false, true, true};
  Tape tape(false);
  const double got = cross_entropy(tape.constant(logits), targets, mask).value().item();
  double expect = 0.0;
  for (std::size_t r : {0u, 2u, 3u}) {
    double mx = -1e300;
    for (float v : logits.row(r)) mx = std::max(mx, double(v));
    double s = 0.0;
    for (float v : logits.row(r)) s += std::exp(double(v) - mx);
    expect += -(double(logits.at(r, targets[r])) - mx - std::log(s));
  }
  expect /= 3.0;
  CHECK(std::abs(got - expect) < 1e-6);

  const double summed =
      cross_entropy(tape.constant(logits), targets, mask, Reduction::Sum).value().item();
  CHECK(std::abs(summed - 3.0 * expect) < 3e-6);
}

TEST_CASE("cross_entropy limits and errors") {
  Tape tape(false);
  const std::size_t v = 11;
  auto uniform = tape.constant(Tensor({3, v}, 0.25f));
  const std::vector<int> targets{1, 2, 3};
  CHECK(cross_entropy(uniform, targets, {true, true, true}).value().item() ==
        doctest::Approx(std::log(double(v))).epsilon(1e-6));

  Tensor sharp({1, 3}, {80.0f, 0.0f, 0.0f});
  CHECK(cross_entropy(tape.constant(sharp), std::vector<int>{0}, {true}).value().item() < 1e-6);

  CHECK_THROWS_AS(cross_entropy(uniform, targets, {false, false, false}), InvalidInput);
}

TEST_CASE("backward of a scalar product") {
  ParameterStore s = store_of({Tensor({1}, {3.0f}), Tensor({1}, {-2.0f})});
  Tape tape;
  auto x = tape.parameter(s, 0);
  auto y = tape.parameter(s, 1);
  tape.backward(mul(x, y));
  GradientSet g = zero_gradients(s);
  tape.accumulate_parameter_grads(g);
  CHECK(g[0][0] == -2.0f);
  CHECK(g[1][0] == 3.0f);
}

TEST_CASE("backward requires a scalar") {
  ParameterStore s = store_of({Tensor({2, 2}, 1.0f)});
  Tape tape;
  auto x = tape.parameter(s, 0);
  CHECK_THROWS_AS(tape.backward(x), InvalidInput);
}

TEST_CASE("shape errors") {
  Tape tape(false);
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({2, 3}));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, tape.constant(Tensor({3, 2}))), ShapeError);
  CHECK_THROWS_AS(mul(a, tape.constant(Tensor({3}))), ShapeError);
  CHECK_THROWS_AS(embedding(a, std::vector<int>{5}), InvalidInput);
}

TEST_CASE("per-op gradients match central differences") {
  for (auto& c : mpa::testing::op_cases()) {
    CAPTURE(c.name);
    CHECK(op_gradient_error(c.inputs, c.build) < kOpTol);
  }
}

TEST_CASE("dropout is a pure function of its key") {
  Tape tape(false);
  auto x = tape.constant(Tensor({8, 8}, 1.0f));
  const DropoutKey key{1, 2, 3, 4};
  const auto a = dropout(x, 0.5f, key).value();
  const auto b = dropout(x, 0.5f, key).value();
  const auto c = dropout(x, 0.5f, key.with_layer(3)).value();
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (float v : a.data()) CHECK((v == 0.0f || v == 2.0f));
  CHECK(dropout(x, 0.0f, key).value() == x.value());
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, step counts") {
  ParameterStore s = store_of({Tensor({3}, {1.0f, -2.0f, 0.5f})});
  const Tensor before = s.value(0);
  AdamState st = AdamState::for_store(s, AdamConfig{0.1f});
  GradientSet g = zero_gradients(s);
  adam_step(s, g, st);
  CHECK(s.value(0) == before);
  CHECK(st.step == 1);
  adam_step(s, g, st);
  CHECK(st.step == 2);
}

TEST_CASE("adam minimizes p^2 from 1 within 200 steps") {
  ParameterStore s = store_of({Tensor({1}, {1.0f})});
  AdamState st = AdamState::for_store(s, AdamConfig{0.1f});
  int steps = 0;
  while (std::abs(s.value(0)[0]) >= 0.1f && steps < 200) {
    GradientSet g = zero_gradients(s);
    g[0][0] = 2.0f * s.value(0)[0];
    adam_step(s, g, st);
    ++steps;
  }
  CHECK(std::abs(s.value(0)[0]) < 0.1f);
  CHECK(steps <= 200);
}

TEST_CASE("adam rejects mismatched shapes") {
  ParameterStore s = store_of({Tensor({3}, 1.0f)});
  AdamState st = AdamState::for_store(s);
  GradientSet g{Tensor({4}, 0.0f)};
  CHECK_THROWS_AS(adam_step(s, g, st), ShapeError);
}

TEST_CASE("global norm clipping") {
  GradientSet g{Tensor({2}, {3.0f, 0.0f}), Tensor({1}, {4.0f})};
  CHECK(global_norm(g) == doctest::Approx(5.0));
  const double before = clip_global_norm(g, 1.0);
  CHECK(before == doctest::Approx(5.0));
  CHECK(global_norm(g) <= 1.0 + 1e-6);
  GradientSet small{Tensor({1}, {0.5f})};
  clip_global_norm(small, 1.0);
  CHECK(small[0][0] == 0.5f);
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(8);
  ParameterStore s = store_of({random_tensor({6, 5}, rng), random_tensor({5, 4}, rng)});
  auto run = [&] {
    Tape tape;
    auto v = testing::leaves(tape, s);
    auto y = softmax(gelu(matmul(v[0], v[1])), 1);
    tape.backward(sum(mul(y, y)));
    GradientSet g = zero_gradients(s);
    tape.accumulate_parameter_grads(g);
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("counter-based rng") {
  CHECK(mix_key({1, 2}) != mix_key({2, 1}));
  CHECK(mix_key({1, 2}) == mix_key({1, 2}));
  auto a = make_engine({5, 6});
  auto b = make_engine({5, 6});
  CHECK(a() == b());
  for (std::uint64_t x : {0ull, 1ull, ~0ull}) {
    const float u = unit_float(splitmix64(x));
    CHECK(u >= 0.0f);
    CHECK(u < 1.0f);
  }
}
