#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "svid/tensor.hpp"

namespace svid {

struct UNetConfig {
  int in_channels = 1;
  int base_channels = 16;
  int depth = 3;
  int kernel = 3;
  double slope = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  /// Spatial extents must be multiples of this.
  std::size_t spatial_multiple() const { return std::size_t{1} << (depth - 1); }
  bool operator==(const UNetConfig&) const = default;
};

struct NamedParam {
  std::string name;
  Tensor value;
};

/// The denoiser: an encoder of `depth` levels (two conv+activation each,
/// 2x2 average pooling between levels), a mirrored decoder (nearest upsample,
/// conv+activation, skip concatenation, two conv+activation) and a final
/// conv back to in_channels. It predicts the image, not the noise.
class Network {
 public:
  static Network build(const UNetConfig& config);

  /// y: [N, in_channels, H, W] with H, W multiples of spatial_multiple().
  Tensor forward(const Tensor& y) const;

  const UNetConfig& config() const { return config_; }
  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& params() { return params_; }
  std::vector<Tensor> param_tensors() const;
  std::size_t parameter_count() const;
  /// Deep copy with fresh leaves (no shared buffers, zeroed gradients).
  Network clone() const;
  void zero_grad();

 private:
  struct Conv {
    std::size_t weight, bias;  // indices into params_
  };
  Network() = default;
  Tensor conv(const Tensor& x, const Conv& c) const;
  Tensor conv_act(const Tensor& x, const Conv& c) const;

  UNetConfig config_;
  std::vector<NamedParam> params_;
  std::vector<Conv> encoder_;   // 2 per level
  std::vector<Conv> decoder_;   // 3 per level below the top: up, fuse, refine
  Conv head_{};
};

}  // namespace svid
