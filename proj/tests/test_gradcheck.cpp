#include <doctest.h>

#include "camloc/net.hpp"
#include "camloc/rng.hpp"

using namespace camloc;

namespace {

ConvNetConfig small_net(int in_ch, int hw, bool relu, Head head, bool bn = false) {
  ConvNetConfig cfg;
  cfg.in_channels = in_ch;
  cfg.in_h = hw;
  cfg.in_w = hw;
  cfg.layers = {{3, 3, 6, 1, 1, 1}, {3, 3, 8, 2, 1, 1}};
  cfg.head = head;
  cfg.num_classes = 3;
  cfg.relu = relu;
  cfg.batch_norm = bn;
  return cfg;
}

Tensor random_input(Rng& rng, const ConvNetConfig& cfg) {
  Tensor x({cfg.in_channels, cfg.in_h, cfg.in_w});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  return x;
}

}  // namespace

TEST_CASE("gradcheck: linear model (1x1 convs, no nonlinearity) is near machine precision") {
  ConvNetConfig cfg;
  cfg.in_channels = 2;
  cfg.in_h = 6;
  cfg.in_w = 6;
  cfg.layers = {{1, 1, 4, 1, 0, 0}, {1, 1, 5, 1, 0, 0}};
  cfg.head = Head::kGap;
  cfg.num_classes = 3;
  cfg.relu = false;
  const ConvNet net(cfg, init_params(cfg, 42));
  Rng rng(1);
  const Tensor x = random_input(rng, cfg);
  const auto r = finite_difference_check(net, x, 1, 1e-5, 1 << 20, 0);
  CHECK(r.skipped_nonsmooth == 0);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-7);
}

TEST_CASE("gradcheck: random two-layer ReLU nets stay under 1e-4") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const ConvNetConfig cfg = small_net(2, 8, true, seed % 2 ? Head::kGmp : Head::kGap);
    const ConvNet net(cfg, init_params(cfg, seed + 100));
    Rng rng(seed);
    const Tensor x = random_input(rng, cfg);
    const auto r = finite_difference_check(net, x, static_cast<int>(seed % 3), 1e-5, 200, seed);
    CAPTURE(seed);
    CHECK(r.checked > 100);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradcheck: batch-norm path") {
  const ConvNetConfig cfg = small_net(2, 8, true, Head::kGap, /*bn=*/true);
  const ConvNet net(cfg, init_params(cfg, 7));
  Rng rng(3);
  const Tensor x = random_input(rng, cfg);
  // Conv biases are exactly redundant under BN (zero true gradient), which
  // makes the relative error pure central-difference noise; a larger epsilon
  // keeps that noise under the threshold.
  const auto r = finite_difference_check(net, x, 0, 1e-4, 150, 5);
  CHECK(r.checked > 80);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradcheck rejects epsilon outside (0, 1e-2]") {
  const ConvNetConfig cfg = small_net(1, 6, true, Head::kGap);
  const ConvNet net(cfg, init_params(cfg, 9));
  Rng rng(4);
  const Tensor x = random_input(rng, cfg);
  CHECK_THROWS_AS(finite_difference_check(net, x, 0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(finite_difference_check(net, x, 0, 0.5), std::invalid_argument);
  CHECK_NOTHROW(finite_difference_check(net, x, 0, 1e-2, 8, 0));
}

TEST_CASE("training step is deterministic under identical seeds") {
  const ConvNetConfig cfg = small_net(2, 8, true, Head::kGap);
  Rng rng(5);
  const Tensor x1 = random_input(rng, cfg);
  const Tensor x2 = random_input(rng, cfg);

  auto run = [&] {
    ConvNet net(cfg, init_params(cfg, 77));
    Sgd sgd(0.05, 0.9);
    for (int step = 0; step < 4; ++step) {
      BatchCache cache;
      net.forward_batch({&x1, &x2}, true, cache);
      std::vector<std::vector<double>> gl;
      for (int b = 0; b < 2; ++b) {
        auto sm = softmax_cross_entropy(cache.samples[static_cast<std::size_t>(b)].logits, b);
        for (double& g : sm.grad_logits) g /= 2.0;
        gl.push_back(std::move(sm.grad_logits));
      }
      ModelParams grads = zero_like(net.params());
      net.backward_batch(cache, gl, grads);
      REQUIRE(sgd.step(net.params(), grads));
    }
    std::vector<double> flat;
    net.params().visit_const([&](const std::string&, const Tensor& t) {
      flat.insert(flat.end(), t.data(), t.data() + t.size());
    });
    return flat;
  };
  CHECK(run() == run());
}
