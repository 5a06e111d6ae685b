#include <doctest.h>

#include <cmath>

#include "camloc/net.hpp"
#include "camloc/rng.hpp"
#include "oracles.hpp"

using namespace camloc;

namespace {
Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}
}  // namespace

// ---------------------------------------------------------------------------
// conv2d_forward
// ---------------------------------------------------------------------------

TEST_CASE("conv2d: zero input yields the bias everywhere") {
  Rng rng(1);
  const Tensor x({1, 3, 3});
  const Tensor w = random_tensor(rng, {2, 1, 3, 3});
  const Tensor b = Tensor::from_data({2}, {0.7, -1.25});
  const Tensor out = conv2d_forward(x, w, b, 1, 1);
  for (int oc = 0; oc < 2; ++oc)
    for (int y = 0; y < 3; ++y)
      for (int xx = 0; xx < 3; ++xx) CHECK(out(oc, y, xx) == b(oc));
}

TEST_CASE("conv2d: 1x1 identity kernel returns the input") {
  Rng rng(2);
  const Tensor x = random_tensor(rng, {1, 4, 5});
  const Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0});
  const Tensor b({1});
  const Tensor out = conv2d_forward(x, w, b, 1, 0);
  CHECK(out.values() == x.values());
}

TEST_CASE("conv2d matches the nested-loop oracle bit for bit") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + rng.uniform_int(3);
    const int h = 3 + rng.uniform_int(8);
    const int w = 3 + rng.uniform_int(8);
    const int oc = 1 + rng.uniform_int(4);
    const int k = 1 + 2 * rng.uniform_int(2);
    const int stride = 1 + rng.uniform_int(2);
    const int pad = rng.uniform_int(2);
    const Tensor x = random_tensor(rng, {c, h, w});
    const Tensor wt = random_tensor(rng, {oc, c, k, k});
    const Tensor b = random_tensor(rng, {oc});
    const Tensor got = conv2d_forward(x, wt, b, stride, pad);
    const Tensor want = oracles::conv_nested_loop(x, wt, b, stride, pad, pad);
    REQUIRE(got.shape() == want.shape());
    REQUIRE(got.values() == want.values());
  }

  SUBCASE("the documented 1x5x5 / 3x3 example") {
    const Tensor x = random_tensor(rng, {1, 5, 5});
    const Tensor wt = random_tensor(rng, {1, 1, 3, 3});
    const Tensor b = random_tensor(rng, {1});
    CHECK(conv2d_forward(x, wt, b, 1, 0).values() ==
          oracles::conv_nested_loop(x, wt, b, 1, 0, 0).values());
  }
}

TEST_CASE("conv2d rejects shape mismatches with a diagnostic naming dimensions") {
  const Tensor x({3, 8, 8});
  const Tensor w({4, 2, 3, 3});  // 2 weight channels vs 3 input channels
  const Tensor b({4});
  CHECK_THROWS_WITH_AS(conv2d_forward(x, w, b, 1, 1),
                       doctest::Contains("input channels 3"), std::invalid_argument);
  const Tensor bad_bias({3});
  const Tensor w_ok({4, 3, 3, 3});
  CHECK_THROWS_AS(conv2d_forward(x, w_ok, bad_bias, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(conv2d_forward(x, w_ok, b, 0, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// conv2d_backward
// ---------------------------------------------------------------------------

TEST_CASE("conv2d_backward: zero upstream gradient produces zero gradients") {
  Rng rng(4);
  const Tensor x = random_tensor(rng, {2, 6, 6});
  const Tensor w = random_tensor(rng, {3, 2, 3, 3});
  const Tensor gout({3, 6, 6});
  const ConvGrads g = conv2d_backward(gout, x, w, 1, 1);
  for (std::int64_t i = 0; i < g.grad_input.size(); ++i) CHECK(g.grad_input[i] == 0.0);
  for (std::int64_t i = 0; i < g.grad_weights.size(); ++i) CHECK(g.grad_weights[i] == 0.0);
  for (std::int64_t i = 0; i < g.grad_bias.size(); ++i) CHECK(g.grad_bias[i] == 0.0);
}

TEST_CASE("conv2d_backward: 1x1 identity kernel passes the gradient through") {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {1, 4, 4});
  const Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0});
  const Tensor gout = random_tensor(rng, {1, 4, 4});
  const ConvGrads g = conv2d_backward(gout, x, w, 1, 0);
  CHECK(g.grad_input.values() == gout.values());
}

TEST_CASE("conv2d_backward rejects a missing forward cache") {
  const Tensor gout({1, 4, 4});
  const Tensor w({1, 1, 1, 1});
  CHECK_THROWS_WITH_AS(conv2d_backward(gout, Tensor{}, w, 1, 0), doctest::Contains("cache"),
                       std::invalid_argument);
}

// ---------------------------------------------------------------------------
// global_pool
// ---------------------------------------------------------------------------

TEST_CASE("global_pool: constant map returns the constant under both modes") {
  const Tensor f = Tensor::full({3, 4, 5}, -2.5);
  for (const auto mode : {PoolMode::kAvg, PoolMode::kMax}) {
    const Tensor p = global_pool(f, mode);
    for (int c = 0; c < 3; ++c) CHECK(p(c) == -2.5);
  }
}

TEST_CASE("global_pool: [[1,2],[3,4]] averages to 2.5, max 4") {
  const Tensor f = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  CHECK(global_pool(f, PoolMode::kAvg)(0) == 2.5);
  CHECK(global_pool(f, PoolMode::kMax)(0) == 4.0);
}

TEST_CASE("global_pool: all-negative map max returns the least negative value") {
  const Tensor f = Tensor::from_data({1, 2, 2}, {-9, -4.5, -7, -11});
  CHECK(global_pool(f, PoolMode::kMax)(0) == -4.5);
}

TEST_CASE("global_pool rejects an empty spatial extent and avg equals sum/(H*W)") {
  CHECK_THROWS_AS(global_pool(Tensor({3}), PoolMode::kAvg), std::invalid_argument);

  Rng rng(6);
  const Tensor f = random_tensor(rng, {4, 5, 3});
  const Tensor p = global_pool(f, PoolMode::kAvg);
  for (int c = 0; c < 4; ++c) {
    double s = 0.0;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 3; ++x) s += f(c, y, x);
    CHECK(p(c) == doctest::Approx(s / 15.0).epsilon(1e-15));
  }
}

TEST_CASE("global_pool is permutation-invariant per channel") {
  Rng rng(7);
  Tensor f = random_tensor(rng, {2, 3, 4});
  Tensor shuffled = f;
  // Reverse the spatial order of every channel.
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 12; ++i)
      shuffled[static_cast<std::int64_t>(c) * 12 + i] = f[static_cast<std::int64_t>(c) * 12 + 11 - i];
  for (const auto mode : {PoolMode::kAvg, PoolMode::kMax}) {
    const Tensor a = global_pool(f, mode), b = global_pool(shuffled, mode);
    for (int c = 0; c < 2; ++c) CHECK(a(c) == doctest::Approx(b(c)).epsilon(1e-15));
  }
}

TEST_CASE("global_pool max backward routes the gradient to a single position") {
  const Tensor f = Tensor::from_data({1, 2, 2}, {1, 4, 4, 2});
  const Tensor g = Tensor::from_data({1}, {3.0});
  const Tensor back = global_pool_backward(g, f, PoolMode::kMax);
  CHECK(back(0, 0, 1) == 3.0);  // first argmax in row-major order
  CHECK(back(0, 0, 0) == 0.0);
  CHECK(back(0, 1, 0) == 0.0);
  CHECK(back(0, 1, 1) == 0.0);
}

// ---------------------------------------------------------------------------
// softmax_cross_entropy
// ---------------------------------------------------------------------------

TEST_CASE("softmax: uniform logits give loss ln(N)") {
  const auto r = softmax_cross_entropy({0.3, 0.3, 0.3, 0.3}, 2);
  CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("softmax: extreme logits stay stable and match the long-double oracle") {
  const std::vector<double> logits{1000.0, 0.0};
  const auto r = softmax_cross_entropy(logits, 0);
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss >= 0.0);
  CHECK(r.loss < 1e-300);  // log(1 + e^-1000), no overflow

  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(4);
    for (double& v : l) v = rng.uniform(-30.0, 30.0);
    const int label = rng.uniform_int(4);
    const auto got = softmax_cross_entropy(l, label);
    const double want = oracles::softmax_xent_longdouble(l, label);
    CHECK(got.loss == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("softmax: gradient sums to zero across classes") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> l(5);
    for (double& v : l) v = rng.uniform(-10.0, 10.0);
    const auto r = softmax_cross_entropy(l, rng.uniform_int(5));
    double s = 0.0;
    for (double g : r.grad_logits) s += g;
    CHECK(std::abs(s) < 1e-12);
  }
}

TEST_CASE("softmax rejects out-of-range labels and tiny class counts") {
  CHECK_THROWS_AS(softmax_cross_entropy({1.0, 2.0}, 2), std::invalid_argument);
  CHECK_THROWS_AS(softmax_cross_entropy({1.0, 2.0}, -1), std::invalid_argument);
  CHECK_THROWS_AS(softmax_cross_entropy({1.0}, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

TEST_CASE("sgd: zero gradients leave parameters unchanged") {
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 3.0});
  const Tensor expected = p;
  Tensor g({3}), v({3});
  CHECK(sgd_step(p, g, v, 0.5, 0.9));
  CHECK(p.values() == expected.values());
}

TEST_CASE("sgd: momentum 0, lr 1 subtracts the gradient") {
  Tensor p = Tensor::from_data({2}, {1.0, 2.0});
  const Tensor g = Tensor::from_data({2}, {0.25, -0.5});
  Tensor v({2});
  CHECK(sgd_step(p, g, v, 1.0, 0.0));
  CHECK(p(0) == 0.75);
  CHECK(p(1) == 2.5);
}

TEST_CASE("sgd: two momentum steps match the hand-unrolled recurrence") {
  // v1 = g1, p1 = p0 - lr*v1; v2 = m*v1 + g2, p2 = p1 - lr*v2.
  const double lr = 0.1, m = 0.9, g1 = 0.4, g2 = -0.2, p0 = 1.0;
  Tensor p = Tensor::from_data({1}, {p0});
  Tensor v({1});
  sgd_step(p, Tensor::from_data({1}, {g1}), v, lr, m);
  sgd_step(p, Tensor::from_data({1}, {g2}), v, lr, m);
  const double v1 = g1;
  const double v2 = m * v1 + g2;
  const double expect = p0 - lr * v1 - lr * v2;
  CHECK(p(0) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("sgd rejects non-finite gradients without touching parameters") {
  Tensor p = Tensor::from_data({2}, {1.0, 2.0});
  Tensor g = Tensor::from_data({2}, {0.1, std::nan("")});
  Tensor v({2});
  CHECK_FALSE(sgd_step(p, g, v, 0.1, 0.0));
  CHECK(p(0) == 1.0);
  CHECK(p(1) == 2.0);

  CHECK_THROWS_AS(Sgd(0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(Sgd(0.1, 1.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

TEST_CASE("tensor shape/data invariants") {
  CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0, 2}), std::invalid_argument);
  Tensor t = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(t.all_finite());
  t(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}
