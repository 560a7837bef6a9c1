#include "svid/gradcheck_suite.hpp"

#include <cmath>

#include "svid/noise.hpp"
#include "svid/rng.hpp"
#include "svid/trainer.hpp"
#include "svid/unet.hpp"

namespace svid {

namespace {

// Primitives are at most quadratic along any one coordinate, so central
// differences are exact up to rounding and a wide step keeps rounding small.
constexpr double kEps = 1e-4;
// Networks hold thousands of leaky_relu kinks, so the step stays small; probes
// that still straddle one are detected by halving the step and dropped.
// Rounding in a full forward pass spans a few ulps of the loss.
constexpr double kNetEps = 1e-6;
constexpr double kKinkTolerance = 1e-3;
constexpr double kNetRoundingUlps = 8.0;

class Maker {
 public:
  explicit Maker(std::uint64_t seed) : rng_(make_stream(seed, Stream::init, 0x6c)) {}

  Tensor uniform(Shape shape, bool grad = true) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = u(rng_);
    return Tensor::from(std::move(shape), std::move(v), grad);
  }
  /// Values bounded away from zero so the kink of leaky_relu stays out of reach.
  Tensor off_zero(Shape shape) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = (rng_() & 1 ? 1.0 : -1.0) * u(rng_);
    return Tensor::from(std::move(shape), std::move(v), true);
  }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

/// Contracts a tensor against fixed random weights so every output element
/// contributes to the scalar.
Tensor project(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

GradCheckCase check(const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                    double tol = kPrimitiveTolerance, double eps = kEps,
                    std::optional<std::vector<GradCoordinate>> coords = std::nullopt,
                    std::optional<double> kink = std::nullopt, double ulps = 0.0) {
  return {name, finite_diff_check(f, std::move(leaves), eps, std::move(coords), kink, ulps), tol};
}

std::vector<GradCoordinate> sample_coordinates(const std::vector<Tensor>& leaves, std::size_t per_leaf, Rng& rng) {
  std::vector<GradCoordinate> out;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto n = leaves[i].size();
    if (n <= per_leaf) {
      for (std::size_t k = 0; k < n; ++k) out.push_back({i, k});
    } else {
      for (std::size_t k = 0; k < per_leaf; ++k) out.push_back({i, static_cast<std::size_t>(rng() % n)});
    }
  }
  return out;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed) {
  Maker mk(seed);
  std::vector<GradCheckCase> out;

  {
    auto x = mk.uniform({2, 3, 5, 6}), w = mk.uniform({4, 3, 3, 3}), b = mk.uniform({4});
    auto p = mk.uniform({2, 4, 5, 6}, false);
    out.push_back(check("conv2d stride 1 pad 1", [=] { return project(conv2d(x, w, b, 1, 1), p); }, {x, w, b}));
  }
  {
    auto x = mk.uniform({1, 2, 7, 7}), w = mk.uniform({3, 2, 3, 3}), b = mk.uniform({3});
    auto p = mk.uniform({1, 3, 3, 3}, false);
    out.push_back(check("conv2d stride 2 pad 0", [=] { return project(conv2d(x, w, b, 2, 0), p); }, {x, w, b}));
  }
  {
    auto x = mk.off_zero({2, 3, 4, 4});
    auto p = mk.uniform({2, 3, 4, 4}, false);
    out.push_back(check("leaky_relu", [=] { return project(leaky_relu(x, 0.1), p); }, {x}));
  }
  {
    auto x = mk.uniform({1, 2, 6, 4});
    auto p = mk.uniform({1, 2, 3, 2}, false);
    out.push_back(check("downsample2x", [=] { return project(downsample2x(x), p); }, {x}));
  }
  {
    auto x = mk.uniform({1, 2, 3, 2});
    auto p = mk.uniform({1, 2, 6, 4}, false);
    out.push_back(check("upsample2x", [=] { return project(upsample2x(x), p); }, {x}));
  }
  {
    auto a = mk.uniform({2, 2, 3, 3}), b = mk.uniform({2, 3, 3, 3});
    auto p = mk.uniform({2, 5, 3, 3}, false);
    out.push_back(check("concat_channels", [=] { return project(concat_channels(a, b), p); }, {a, b}));
  }
  {
    auto a = mk.uniform({3, 4}), b = mk.uniform({3, 4});
    out.push_back(check("mse", [=] { return mse(a, b); }, {a, b}));
  }
  {
    auto a = mk.uniform({3, 4}), b = mk.uniform({3, 4});
    auto p = mk.uniform({3, 4}, false);
    out.push_back(check("add", [=] { return project(add(a, b), p); }, {a, b}));
    out.push_back(check("sub", [=] { return project(sub(a, b), p); }, {a, b}));
    out.push_back(check("mul", [=] { return project(mul(a, b), p); }, {a, b}));
    out.push_back(check("scale", [=] { return project(scale(a, -1.7), p); }, {a}));
    out.push_back(check("sum", [=] { return scale(sum(mul(a, a)), 0.5); }, {a}));
  }
  {
    auto x = mk.uniform({2, 3});
    out.push_back(check("stop_gradient product", [=] { return sum(mul(stop_gradient(x), x)); }, {x}));
  }
  {
    auto f = mk.uniform({1, 1, 4, 4}), y = mk.uniform({1, 1, 4, 4});
    auto p = mk.uniform({1, 1, 4, 4}, false);
    const Mask m = sample_mask({1, 1, 4, 4}, 0.5, mk.rng());
    out.push_back(check("degrade", [=] { return project(degrade(f, y, m), p); }, {f, y}));
  }

  UNetConfig cfg;
  cfg.base_channels = 4;
  cfg.depth = 3;
  cfg.seed = seed;
  const Network net = Network::build(cfg);
  const auto params = net.param_tensors();
  Rng coord_rng = make_stream(seed, Stream::sample, 0x67);
  {
    auto x = mk.uniform({1, 1, 8, 8}, false);
    auto y = mk.uniform({1, 1, 8, 8}, true);
    std::vector<Tensor> leaves = params;
    leaves.push_back(y);
    auto coords = sample_coordinates(leaves, 6, coord_rng);
    out.push_back(check("unet depth 3 supervised mse", [=] { return mse(net.forward(y), x); }, leaves,
                        kCompositeTolerance, kNetEps, coords, kKinkTolerance, kNetRoundingUlps));
  }
  {
    auto y = mk.uniform({1, 1, 8, 8}, false);
    const Mask m = sample_mask({1, 1, 8, 8}, 0.5, mk.rng());
    auto coords = sample_coordinates(params, 6, coord_rng);
    out.push_back(check("unet depth 3 svid loss", [=] { return svid_loss(net, y, m); }, params, kCompositeTolerance,
                        kNetEps, coords, kKinkTolerance, kNetRoundingUlps));
  }
  return out;
}

}  // namespace svid
