#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "svid/optim.hpp"

using namespace svid;
using svid::test::copy;

TEST_CASE("schedule examples") {
  CHECK(lr_schedule(0, 2'000'000, 2e-4, 1'000'000) == 2e-4);
  CHECK(lr_schedule(999'999, 2'000'000, 2e-4, 1'000'000) == 2e-4);
  CHECK(lr_schedule(1'500'000, 2'000'000, 2e-4, 1'000'000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(2'000'000, 2'000'000, 2e-4, 1'000'000) == 0.0);
}

TEST_CASE("schedule is constant then affine and continuous") {
  const std::uint64_t total = 1000, decay = 400;
  CHECK(lr_schedule(decay, total, 1.0, decay) == 1.0);
  double prev = 1.0;
  for (std::uint64_t t = decay + 1; t <= total; ++t) {
    const double lr = lr_schedule(t, total, 1.0, decay);
    CHECK(lr < prev);
    CHECK(prev - lr == doctest::Approx(1.0 / double(total - decay)));
    prev = lr;
  }
  CHECK_THROWS_AS(lr_schedule(total + 1, total, 1.0, decay), std::out_of_range);
  CHECK_THROWS_AS(lr_schedule(0, total, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(0, total, 1.0, total + 1), std::invalid_argument);
}

TEST_CASE("adam single step by hand") {
  auto p = Tensor::from({1}, {0.5}, true);
  p.mutable_grad()[0] = 1.0;
  AdamState s;
  adam_step({p}, s, 0.1);
  // m_hat = 1, v_hat = 1: step = 0.1 / (1 + 1e-8).
  CHECK(p[0] == doctest::Approx(0.5 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(s.step == 1);
  CHECK(s.m[0][0] == doctest::Approx(0.1));
  CHECK(s.v[0][0] == doctest::Approx(0.001));
}

TEST_CASE("adam second step by hand") {
  auto p = Tensor::from({1}, {0.0}, true);
  AdamState s;
  p.mutable_grad()[0] = 1.0;
  adam_step({p}, s, 0.1);
  p.mutable_grad()[0] = -2.0;
  adam_step({p}, s, 0.1);
  const double m = 0.9 * 0.1 + 0.1 * -2.0, v = 0.999 * 0.001 + 0.001 * 4.0;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  CHECK(p[0] == doctest::Approx(-0.1 / (1 + 1e-8) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  auto p = Tensor::from({3}, {1.0, -2.0, 3.0}, true);
  AdamState s;
  for (int i = 0; i < 5; ++i) adam_step({p}, s, 0.1);
  CHECK(copy(p.data()) == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    auto p = Tensor::from({2}, {0.3, -0.7}, true);
    AdamState s;
    for (int i = 0; i < 20; ++i) {
      p.zero_grad();
      backward(sum(mul(mul(p, p), p)));
      adam_step({p}, s, 0.01);
    }
    return copy(p.data());
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite gradients abort the step untouched") {
  auto a = Tensor::from({2}, {1.0, 2.0}, true), b = Tensor::from({1}, {3.0}, true);
  AdamState s;
  a.mutable_grad()[0] = 0.5;
  b.mutable_grad()[0] = NAN;
  CHECK_THROWS_AS(adam_step({a, b}, s, 0.1), NumericalError);
  CHECK(copy(a.data()) == std::vector<double>{1.0, 2.0});
  CHECK(s.step == 0);
  b.mutable_grad()[0] = INFINITY;
  CHECK_THROWS_AS(adam_step({a, b}, s, 0.1), NumericalError);
}

TEST_CASE("gradient norm") {
  auto a = Tensor::from({2}, {0.0, 0.0}, true), b = Tensor::from({1}, {0.0}, true);
  a.mutable_grad()[0] = 3.0;
  b.mutable_grad()[0] = 4.0;
  CHECK(grad_norm({a, b}) == 5.0);
}
