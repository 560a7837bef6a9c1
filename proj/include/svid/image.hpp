#pragma once

#include <cstddef>
#include <vector>

#include "svid/tensor.hpp"

namespace svid {

/// Planar (channel-major) image with real intensities, nominally in [0,1].
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pixels;  // [channel][row][column]

  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0);
  ImageBuffer(int width, int height, int channels, std::vector<double> values);

  std::size_t plane_size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  double& at(int c, int y, int x) { return pixels[index(c, y, x)]; }
  double at(int c, int y, int x) const { return pixels[index(c, y, x)]; }

  /// [1, C, H, W] leaf tensor.
  Tensor to_tensor() const;
  static ImageBuffer from_tensor(const Tensor& t, std::size_t batch_index = 0);

  bool operator==(const ImageBuffer&) const = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
};

}  // namespace svid
