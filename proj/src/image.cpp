#include "svid/image.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace svid {

namespace {

void check_dims(int width, int height, int channels) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("image channel count must be 1 or 3, got " + std::to_string(channels));
}

}  // namespace

ImageBuffer::ImageBuffer(int w, int h, int c, double fill) : width(w), height(h), channels(c) {
  check_dims(w, h, c);
  pixels.assign(plane_size() * static_cast<std::size_t>(c), fill);
}

ImageBuffer::ImageBuffer(int w, int h, int c, std::vector<double> values)
    : width(w), height(h), channels(c), pixels(std::move(values)) {
  check_dims(w, h, c);
  if (pixels.size() != plane_size() * static_cast<std::size_t>(c))
    throw std::invalid_argument("image buffer size does not match its dimensions");
}

Tensor ImageBuffer::to_tensor() const {
  return Tensor::from({1, static_cast<std::size_t>(channels), static_cast<std::size_t>(height),
                       static_cast<std::size_t>(width)},
                      pixels);
}

ImageBuffer ImageBuffer::from_tensor(const Tensor& t, std::size_t batch_index) {
  if (t.rank() != 4 || batch_index >= t.dim(0))
    throw ShapeError("expected an NCHW tensor containing batch item " + std::to_string(batch_index) + ", got " +
                     to_string(t.shape()));
  const auto per = t.dim(1) * t.dim(2) * t.dim(3);
  auto d = t.data().subspan(batch_index * per, per);
  return ImageBuffer(static_cast<int>(t.dim(3)), static_cast<int>(t.dim(2)), static_cast<int>(t.dim(1)),
                     std::vector<double>(d.begin(), d.end()));
}

}  // namespace svid
