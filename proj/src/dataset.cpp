#include "svid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "svid/image_io.hpp"

namespace svid {

CropPosition sample_crop_position(int width, int height, int size, Rng& rng) {
  if (size <= 0) throw std::invalid_argument("crop size must be positive");
  if (width < size || height < size)
    throw std::invalid_argument("image " + std::to_string(width) + "x" + std::to_string(height) +
                                " is smaller than crop " + std::to_string(size));
  std::uniform_int_distribution<int> row(0, height - size), col(0, width - size);
  const int top = row(rng);
  return {top, col(rng)};
}

ImageBuffer crop(const ImageBuffer& img, CropPosition at, int size) {
  if (at.top < 0 || at.left < 0 || at.top + size > img.height || at.left + size > img.width)
    throw std::invalid_argument("crop window leaves the image");
  ImageBuffer out(size, size, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = img.at(c, at.top + y, at.left + x);
  return out;
}

ImageBuffer random_crop(const ImageBuffer& img, int size, Rng& rng) {
  return crop(img, sample_crop_position(img.width, img.height, size, rng), size);
}

DatasetSplit split_files(std::vector<std::filesystem::path> files, std::uint64_t seed, double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
    throw std::invalid_argument("train_fraction must lie in [0,1]");
  std::sort(files.begin(), files.end());
  Rng rng = make_stream(seed, Stream::split);
  // Explicit Fisher-Yates so the order does not depend on the library's shuffle.
  for (std::size_t i = files.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(files[i - 1], files[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(files.size())));
  DatasetSplit split;
  split.train.assign(files.begin(), files.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(files.begin() + static_cast<std::ptrdiff_t>(n_train), files.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_path(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

DatasetSplit build_dataset(const std::filesystem::path& dir, std::uint64_t seed, double train_fraction) {
  return split_files(list_images(dir), seed, train_fraction);
}

std::vector<ImageBuffer> load_images(const std::vector<std::filesystem::path>& paths) {
  std::vector<ImageBuffer> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_image(p));
  return out;
}

ImageBuffer shapes_image(int size, Rng& rng) {
  if (size <= 0) throw std::invalid_argument("image size must be positive");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  ImageBuffer img(size, size, 1);
  const double a = uni(-0.4, 0.4), b = uni(-0.4, 0.4);
  auto coord = [&](int i) { return static_cast<double>(i) / size; };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) img.at(0, y, x) = 0.5 + a * (coord(x) - 0.5) + b * (coord(y) - 0.5);

  const int shapes = 3 + static_cast<int>(rng() % 4);
  for (int s = 0; s < shapes; ++s) {
    const int kind = static_cast<int>(rng() % 3);
    const double level = uni(0.05, 0.95);
    const double cx = u(rng), cy = u(rng), r = uni(0.08, 0.3);
    const double half_h = uni(0.05, 0.3);
    const double nx = normal(rng), ny = normal(rng);
    const double slope = uni(-0.3, 0.3);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dx = coord(x) - cx, dy = coord(y) - cy;
        bool inside = false;
        if (kind == 0) inside = dx * dx + dy * dy < r * r;
        else if (kind == 1) inside = std::abs(dx) < r && std::abs(dy) < half_h;
        else inside = dx * nx + dy * ny > 0.0 && dx * dx + dy * dy < 2.25 * r * r;
        if (inside) img.at(0, y, x) = level + slope * dx;
      }
  }
  for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

std::vector<ImageBuffer> shapes_dataset(int count, int size, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("image count must be non-negative");
  std::vector<ImageBuffer> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = make_stream(seed, Stream::synth, static_cast<std::uint64_t>(i));
    out.push_back(shapes_image(size, rng));
  }
  return out;
}

}  // namespace svid
