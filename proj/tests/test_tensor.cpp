#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "svid/tensor.hpp"

using namespace svid;
using svid::test::copy;
using svid::test::random_tensor;

namespace {

// Direct nested-loop convolution, zero padding.
std::vector<double> reference_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int N = int(x.dim(0)), C = int(x.dim(1)), H = int(x.dim(2)), W = int(x.dim(3));
  const int O = int(w.dim(0)), K = int(w.dim(2));
  const int Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  std::vector<double> out;
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          double s = b[o];
          for (int c = 0; c < C; ++c)
            for (int ki = 0; ki < K; ++ki)
              for (int kj = 0; kj < K; ++kj) {
                const int r = i * stride + ki - pad, q = j * stride + kj - pad;
                if (r < 0 || q < 0 || r >= H || q >= W) continue;
                s += w[((o * C + c) * K + ki) * K + kj] * x[((n * C + c) * H + r) * W + q];
              }
          out.push_back(s);
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d forward matches nested loops") {
  Rng rng(3);
  for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 0}, std::pair{1, 0}, std::pair{2, 1}}) {
    auto x = random_tensor({2, 3, 7, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4}, rng);
    const auto got = conv2d(x, w, b, stride, pad);
    const auto want = reference_conv(x, w, b, stride, pad);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects incompatible shapes") {
  auto x = Tensor::zeros({1, 2, 4, 4}), w = Tensor::zeros({3, 1, 3, 3}), b = Tensor::zeros({3});
  CHECK_THROWS_AS(conv2d(x, w, b, 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({2, 4, 4}), w, b), ShapeError);
}

TEST_CASE("pooling, upsampling and concat values") {
  auto x = Tensor::from({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto d = downsample2x(x);
  CHECK(d.shape() == Shape{1, 1, 1, 2});
  CHECK(d[0] == 3.5);
  CHECK(d[1] == 5.5);

  auto u = upsample2x(Tensor::from({1, 1, 1, 2}, {1, 2}));
  CHECK(copy(u.data()) == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});

  auto c = concat_channels(Tensor::full({1, 1, 1, 2}, 1.0), Tensor::full({1, 2, 1, 2}, 2.0));
  CHECK(copy(c.data()) == std::vector<double>{1, 1, 2, 2, 2, 2});
  CHECK(concat_channels(x, Tensor{}).shape() == x.shape());
  CHECK_THROWS_AS(downsample2x(Tensor::zeros({1, 1, 3, 4})), ShapeError);
}

TEST_CASE("leaky_relu and mse values") {
  auto x = Tensor::from({4}, {-2.0, -0.5, 0.5, 3.0});
  CHECK(copy(leaky_relu(x, 0.1).data()) == std::vector<double>{-0.2, -0.05, 0.5, 3.0});
  CHECK(mse(x, Tensor::zeros({4})).item() == doctest::Approx((4 + 0.25 + 0.25 + 9) / 4.0));
  CHECK_THROWS_AS(mse(x, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(11);
  auto a = random_tensor({3, 4}, rng, true), b = random_tensor({3, 4}, rng, true);
  auto f = [&] { return sum(mul(mul(a, b), a)); };
  auto g = [&] { return mse(a, b); };

  backward(f());
  const auto ga_f = copy(a.grad()), gb_f = copy(b.grad());
  a.zero_grad(), b.zero_grad();
  backward(g());
  const auto ga_g = copy(a.grad()), gb_g = copy(b.grad());
  a.zero_grad(), b.zero_grad();

  const double alpha = 2.5, beta = -0.75;
  backward(add(scale(f(), alpha), scale(g(), beta)));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.grad()[i] == doctest::Approx(alpha * ga_f[i] + beta * ga_g[i]).epsilon(1e-12));
    CHECK(b.grad()[i] == doctest::Approx(alpha * gb_f[i] + beta * gb_g[i]).epsilon(1e-12));
  }
}

TEST_CASE("leaf gradients accumulate across graphs") {
  auto a = Tensor::from({2}, {1.0, 2.0}, true);
  backward(sum(scale(a, 3.0)));
  backward(sum(scale(a, 3.0)));
  CHECK(copy(a.grad()) == std::vector<double>{6.0, 6.0});
  a.zero_grad();
  CHECK(copy(a.grad()) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("graph misuse is rejected") {
  auto a = Tensor::from({2}, {1.0, 2.0}, true);
  auto loss = sum(mul(a, a));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), GraphError);
  CHECK_THROWS_AS(backward(mul(a, a)), GraphError);
  CHECK_THROWS_AS(backward(sum(Tensor::zeros({2}))), GraphError);
  auto product = mul(a, a);
  CHECK_THROWS_AS(product.mutable_data(), GraphError);
}

TEST_CASE("stop_gradient blocks gradient and keeps values") {
  Rng rng(5);
  auto x = random_tensor({2, 3}, rng, true);
  auto s = stop_gradient(x);
  CHECK(copy(s.data()) == copy(x.data()));
  CHECK_FALSE(s.requires_grad());

  // d/dx sum(sg(x) * x) = sg(x): only the live branch contributes.
  backward(sum(mul(stop_gradient(x), x)));
  CHECK(copy(x.grad()) == copy(x.data()));

  // A loss that reaches x only through stop_gradient has nothing to differentiate.
  auto w = random_tensor({2, 3}, rng, true);
  x.zero_grad();
  backward(sum(mul(stop_gradient(x), w)));
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("NoGradGuard builds no graph") {
  auto a = Tensor::from({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    auto y = mul(a, a);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.is_leaf());
  }
  CHECK(grad_enabled());
  CHECK(mul(a, a).requires_grad());
}

TEST_CASE("tensor construction validates shapes") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), ShapeError);
  auto c = Tensor::from({2}, {1, 2}, true).detached_copy();
  CHECK(c.is_leaf());
  CHECK_FALSE(c.requires_grad());
}
