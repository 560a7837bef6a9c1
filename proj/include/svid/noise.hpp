#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svid/rng.hpp"
#include "svid/tensor.hpp"

namespace svid {

enum class NoiseKind { gaussian, speckle, poisson };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

/// A corruption process. Levels are on the internal scale: gaussian sigma on
/// [0,1] intensities, speckle variance v, poisson magnitude lambda. A range
/// (lo < hi) draws one level per image from (lo, hi].
struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double lo = 25.0 / 255.0;
  double hi = 25.0 / 255.0;
  std::uint64_t seed = 0;

  static NoiseSpec fixed(NoiseKind kind, double level, std::uint64_t seed = 0) { return {kind, level, level, seed}; }
  static NoiseSpec range(NoiseKind kind, double lo, double hi, std::uint64_t seed = 0) { return {kind, lo, hi, seed}; }

  bool is_range() const { return hi > lo; }
  /// Throws std::invalid_argument listing the violated bound.
  void validate() const;
  double sample_level(Rng& rng) const;
  /// Parses "v" or "lo:hi". Gaussian levels are given on the 0-255 scale.
  static NoiseSpec parse(NoiseKind kind, const std::string& level, std::uint64_t seed);
  std::string level_string() const;
};

/// y = x + n, n ~ N(0, sigma^2) per pixel. No clipping.
std::vector<double> add_gaussian(std::span<const double> x, double sigma, Rng& rng);
/// y = x + x*n, n ~ U(-sqrt(3v), sqrt(3v)) per pixel.
std::vector<double> add_speckle(std::span<const double> x, double variance, Rng& rng);
/// y = Poisson(lambda*x) / lambda per pixel.
std::vector<double> add_poisson(std::span<const double> x, double lambda, Rng& rng);
std::vector<double> add_noise(std::span<const double> x, NoiseKind kind, double level, Rng& rng);

/// Random +/-1 array; each entry is +1 with probability p.
class Mask {
 public:
  Mask(Shape shape, std::vector<double> values, double p);

  const Shape& shape() const { return shape_; }
  std::span<const double> values() const { return values_; }
  double p() const { return p_; }
  Tensor as_tensor() const { return Tensor::from(shape_, values_); }

  static Mask constant(Shape shape, double sign);

 private:
  Shape shape_;
  std::vector<double> values_;
  double p_;
};

Mask sample_mask(const Shape& shape, double p, Rng& rng);

/// Adaptive noise degradation: y2 = f_y + m * (y - f_y). Differentiable in
/// f_y and y; pass a detached f_y to keep gradients out of the construction.
Tensor degrade(const Tensor& f_y, const Tensor& y, const Mask& m);

}  // namespace svid
