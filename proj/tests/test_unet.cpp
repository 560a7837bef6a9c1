#include "doctest.h"
#include "support.hpp"
#include "svid/unet.hpp"

using namespace svid;
using svid::test::copy;
using svid::test::random_tensor;

namespace {

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }

}  // namespace

TEST_CASE("parameter count of the default network") {
  // Channels 16, 32, 64 down; each decoder level has up, fuse (2c -> c) and refine convs.
  const std::size_t expected = conv_params(1, 16, 3) + conv_params(16, 16, 3) + conv_params(16, 32, 3) +
                               conv_params(32, 32, 3) + conv_params(32, 64, 3) + conv_params(64, 64, 3) +
                               conv_params(64, 32, 3) + conv_params(64, 32, 3) + conv_params(32, 32, 3) +
                               conv_params(32, 16, 3) + conv_params(32, 16, 3) + conv_params(16, 16, 3) +
                               conv_params(16, 1, 3);
  const Network net = Network::build(UNetConfig{});
  CHECK(net.parameter_count() == expected);
  CHECK(expected == 129681);
}

TEST_CASE("forward keeps the input shape") {
  Rng rng(1);
  for (int depth = 1; depth <= 4; ++depth) {
    UNetConfig cfg;
    cfg.depth = depth;
    cfg.base_channels = 4;
    cfg.in_channels = 3;
    const Network net = Network::build(cfg);
    auto y = random_tensor({2, 3, 16, 8}, rng);
    CHECK(net.forward(y).shape() == y.shape());
  }
}

TEST_CASE("forward rejects bad inputs") {
  const Network net = Network::build(UNetConfig{});
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 1, 10, 8})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 3, 8, 8})), ShapeError);
}

TEST_CASE("config validation") {
  UNetConfig cfg;
  cfg.depth = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.slope = 1.0;
  CHECK_THROWS_AS(Network::build(cfg), std::invalid_argument);
}

TEST_CASE("initialization is deterministic per seed") {
  UNetConfig cfg;
  cfg.base_channels = 4;
  const auto a = Network::build(cfg), b = Network::build(cfg);
  cfg.seed = 1;
  const auto c = Network::build(cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(copy(a.params()[i].value.data()) == copy(b.params()[i].value.data()));
    any_diff |= copy(a.params()[i].value.data()) != copy(c.params()[i].value.data());
  }
  CHECK(any_diff);
}

TEST_CASE("clone is independent of the original") {
  UNetConfig cfg;
  cfg.base_channels = 4;
  Network a = Network::build(cfg);
  Network b = a.clone();
  Rng rng(2);
  auto y = random_tensor({1, 1, 8, 8}, rng);
  CHECK(copy(a.forward(y).data()) == copy(b.forward(y).data()));
  b.params()[0].value.mutable_data()[0] += 1.0;
  CHECK(copy(a.forward(y).data()) != copy(b.forward(y).data()));
  CHECK(b.params()[0].value.impl() != a.params()[0].value.impl());
}
