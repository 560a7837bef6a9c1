#include "svid/noise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace svid {

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::speckle: return "speckle";
    case NoiseKind::poisson: return "poisson";
  }
  return "?";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "speckle") return NoiseKind::speckle;
  if (name == "poisson") return NoiseKind::poisson;
  throw std::invalid_argument("unknown noise kind '" + name + "' (expected gaussian|speckle|poisson)");
}

void NoiseSpec::validate() const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi)
    throw std::invalid_argument("noise level range must be finite with lo <= hi");
  switch (kind) {
    case NoiseKind::gaussian:
      if (lo < 0.0) throw std::invalid_argument("gaussian sigma must be >= 0");
      break;
    case NoiseKind::speckle:
      if (lo < 0.0 || hi > 0.25) throw std::invalid_argument("speckle variance must lie in [0, 0.25]");
      break;
    case NoiseKind::poisson:
      if (lo <= 0.0) throw std::invalid_argument("poisson lambda must be > 0");
      break;
  }
}

double NoiseSpec::sample_level(Rng& rng) const {
  if (!is_range()) return lo;
  // hi - u*(hi-lo) with u in [0,1) lands in (lo, hi].
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return hi - u * (hi - lo);
}

NoiseSpec NoiseSpec::parse(NoiseKind kind, const std::string& level, std::uint64_t seed) {
  const double unit = kind == NoiseKind::gaussian ? 1.0 / 255.0 : 1.0;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw std::invalid_argument("bad noise level '" + level + "'");
    return v * unit;
  };
  NoiseSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  if (auto colon = level.find(':'); colon != std::string::npos) {
    spec.lo = number(level.substr(0, colon));
    spec.hi = number(level.substr(colon + 1));
  } else {
    spec.lo = spec.hi = number(level);
  }
  spec.validate();
  return spec;
}

std::string NoiseSpec::level_string() const {
  const double unit = kind == NoiseKind::gaussian ? 255.0 : 1.0;
  std::ostringstream os;
  os.precision(17);
  os << lo * unit;
  if (is_range()) os << ':' << hi * unit;
  return os.str();
}

std::vector<double> add_gaussian(std::span<const double> x, double sigma, Rng& rng) {
  std::vector<double> y(x.begin(), x.end());
  if (sigma == 0.0) return y;
  std::normal_distribution<double> normal(0.0, sigma);
  for (auto& v : y) v += normal(rng);
  return y;
}

std::vector<double> add_speckle(std::span<const double> x, double variance, Rng& rng) {
  std::vector<double> y(x.begin(), x.end());
  if (variance == 0.0) return y;
  const double half_width = std::sqrt(3.0 * variance);
  std::uniform_real_distribution<double> uniform(-half_width, half_width);
  for (auto& v : y) v += v * uniform(rng);
  return y;
}

std::vector<double> add_poisson(std::span<const double> x, double lambda, Rng& rng) {
  if (!(lambda > 0.0)) throw std::invalid_argument("poisson lambda must be > 0");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double rate = lambda * std::max(x[i], 0.0);
    if (rate == 0.0) {
      y[i] = 0.0;
      continue;
    }
    std::poisson_distribution<long long> poisson(rate);
    y[i] = static_cast<double>(poisson(rng)) / lambda;
  }
  return y;
}

std::vector<double> add_noise(std::span<const double> x, NoiseKind kind, double level, Rng& rng) {
  switch (kind) {
    case NoiseKind::gaussian: return add_gaussian(x, level, rng);
    case NoiseKind::speckle: return add_speckle(x, level, rng);
    case NoiseKind::poisson: return add_poisson(x, level, rng);
  }
  throw std::invalid_argument("unknown noise kind");
}

Mask::Mask(Shape shape, std::vector<double> values, double p)
    : shape_(std::move(shape)), values_(std::move(values)), p_(p) {
  if (numel(shape_) != values_.size()) throw ShapeError("mask values do not match shape " + to_string(shape_));
  for (double v : values_)
    if (v != 1.0 && v != -1.0) throw std::invalid_argument("mask entries must be exactly +1 or -1");
}

Mask Mask::constant(Shape shape, double sign) {
  const auto n = numel(shape);
  const double p = sign > 0 ? 1.0 : 0.0;
  return Mask(std::move(shape), std::vector<double>(n, sign > 0 ? 1.0 : -1.0), p);
}

Mask sample_mask(const Shape& shape, double p, Rng& rng) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("mask probability must lie in (0,1)");
  std::bernoulli_distribution coin(p);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = coin(rng) ? 1.0 : -1.0;
  return Mask(shape, std::move(values), p);
}

Tensor degrade(const Tensor& f_y, const Tensor& y, const Mask& m) {
  if (f_y.shape() != y.shape() || f_y.shape() != m.shape())
    throw ShapeError("degrade: shape mismatch f_y " + to_string(f_y.shape()) + ", y " + to_string(y.shape()) +
                     ", mask " + to_string(m.shape()));
  const auto n = y.size();
  auto f = f_y.data(), obs = y.data(), sign = m.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // m = +1 returns y bitwise; m = -1 reflects y about f_y.
    out[i] = sign[i] > 0 ? obs[i] : f[i] - (obs[i] - f[i]);
  }
  std::vector<double> signs(sign.begin(), sign.end());
  return make_result("degrade", y.shape(), std::move(out), {f_y, y}, [signs = std::move(signs)](Node& node) {
    if (auto g = node.input_grad(0); !g.empty())
      for (std::size_t i = 0; i < signs.size(); ++i) g[i] += (1.0 - signs[i]) * node.grad[i];
    if (auto g = node.input_grad(1); !g.empty())
      for (std::size_t i = 0; i < signs.size(); ++i) g[i] += signs[i] * node.grad[i];
  });
}

}  // namespace svid
