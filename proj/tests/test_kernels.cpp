#include <doctest.h>

#include <vector>

#include "camloc/kernels.hpp"
#include "camloc/net.hpp"
#include "camloc/rng.hpp"
#include "oracles.hpp"

using namespace camloc;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void naive_gemm_nn(const double* a, const double* b, double* c, int m, int k, int n,
                   const double* init, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : (init ? init[i] : 0.0);
      for (int p = 0; p < k; ++p) s = s + a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void naive_gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s = s + a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
}

}  // namespace

TEST_CASE("gemm kernels match the naive dot-product reference bit for bit") {
  Rng rng(7);
  std::vector<const kernels::Backend*> backends{&kernels::scalar_backend()};
  if (kernels::avx2_supported()) backends.push_back(&kernels::avx2_backend());

  // Shapes chosen to hit the 4x8 block kernel, the 1x4 tail and the scalar
  // remainder, with and without accumulation/row init.
  const int shapes[][3] = {{1, 1, 1},   {3, 5, 7},   {4, 9, 8},   {5, 27, 17},
                           {16, 144, 256}, {2, 288, 33}, {7, 11, 4}, {8, 3, 9}};
  for (const auto& s : shapes) {
    const int m = s[0], k = s[1], n = s[2];
    const auto a = random_vec(rng, static_cast<std::size_t>(m) * k);
    const auto b = random_vec(rng, static_cast<std::size_t>(k) * n);
    const auto init = random_vec(rng, static_cast<std::size_t>(m));
    const auto base = random_vec(rng, static_cast<std::size_t>(m) * n);

    for (const bool acc : {false, true}) {
      std::vector<double> expected = base;
      naive_gemm_nn(a.data(), b.data(), expected.data(), m, k, n, init.data(), acc);
      for (const auto* backend : backends) {
        std::vector<double> got = base;
        backend->gemm_nn(a.data(), b.data(), got.data(), m, k, n, init.data(), acc);
        CAPTURE(backend->name);
        REQUIRE(got == expected);  // bit-exact
      }
    }

    // gemm_tn with M=k outputs, reduction over m: A stored [m][k], B [m][n].
    {
      const auto at = random_vec(rng, static_cast<std::size_t>(m) * k);
      const auto bt = random_vec(rng, static_cast<std::size_t>(m) * n);
      std::vector<double> expected(static_cast<std::size_t>(k) * n);
      naive_gemm_tn(at.data(), bt.data(), expected.data(), k, m, n);
      for (const auto* backend : backends) {
        std::vector<double> got(static_cast<std::size_t>(k) * n, -1.0);
        backend->gemm_tn(at.data(), bt.data(), got.data(), k, m, n);
        CAPTURE(backend->name);
        REQUIRE(got == expected);
      }
    }
  }
}

TEST_CASE("backend selection") {
  CHECK(std::string(kernels::select_backend("scalar").name) == "scalar");
  CHECK_THROWS_AS(kernels::select_backend("mmx"), std::invalid_argument);
  const auto& autob = kernels::select_backend("auto");
  if (kernels::avx2_supported()) {
    CHECK(std::string(autob.name) == "avx2");
    CHECK(std::string(kernels::select_backend("avx2").name) == "avx2");
  } else {
    CHECK(std::string(autob.name) == "scalar");
  }
}

TEST_CASE("conv2d forward is backend-invariant on random problems") {
  if (!kernels::avx2_supported()) return;
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int c = 1 + rng.uniform_int(4);
    const int h = 3 + rng.uniform_int(14);
    const int w = 3 + rng.uniform_int(14);
    const int oc = 1 + rng.uniform_int(6);
    const int k = 1 + 2 * rng.uniform_int(2);  // 1 or 3
    const int stride = 1 + rng.uniform_int(2);
    const int pad = rng.uniform_int(2);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;

    Tensor x({c, h, w}), wt({oc, c, k, k}), b({oc});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
    for (std::int64_t i = 0; i < wt.size(); ++i) wt[i] = rng.uniform(-1, 1);
    for (std::int64_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-1, 1);

    const Tensor scalar_out = conv2d_forward(x, wt, b, stride, pad, kernels::scalar_backend());
    const Tensor avx_out = conv2d_forward(x, wt, b, stride, pad, kernels::avx2_backend());
    REQUIRE(scalar_out.values() == avx_out.values());

    ConvGrads gs = conv2d_backward(scalar_out, x, wt, stride, pad, true,
                                   kernels::scalar_backend());
    ConvGrads ga = conv2d_backward(avx_out, x, wt, stride, pad, true, kernels::avx2_backend());
    REQUIRE(gs.grad_input.values() == ga.grad_input.values());
    REQUIRE(gs.grad_weights.values() == ga.grad_weights.values());
    REQUIRE(gs.grad_bias.values() == ga.grad_bias.values());
  }
}
