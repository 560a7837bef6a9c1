#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svid/image.hpp"
#include "svid/rng.hpp"

namespace svid {

struct CropPosition {
  int top = 0;
  int left = 0;
  bool operator==(const CropPosition&) const = default;
};

/// Uniform over all top-left corners that keep a size x size window inside the image.
CropPosition sample_crop_position(int width, int height, int size, Rng& rng);
ImageBuffer crop(const ImageBuffer& img, CropPosition at, int size);
ImageBuffer random_crop(const ImageBuffer& img, int size, Rng& rng);

struct DatasetSplit {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
};

/// Sorts, shuffles with the split stream of `seed`, and puts the first
/// floor(fraction * n) files into train. Each side is re-sorted by name.
DatasetSplit split_files(std::vector<std::filesystem::path> files, std::uint64_t seed, double train_fraction);
/// Image files directly inside dir.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);
DatasetSplit build_dataset(const std::filesystem::path& dir, std::uint64_t seed, double train_fraction);
std::vector<ImageBuffer> load_images(const std::vector<std::filesystem::path>& paths);

/// Piecewise-constant shapes (discs, boxes, clipped half-planes) with shallow
/// gradients on a linear-ramp background, clipped to [0,1].
ImageBuffer shapes_image(int size, Rng& rng);
/// Image i is drawn from the synth stream of `seed` with counter i.
std::vector<ImageBuffer> shapes_dataset(int count, int size, std::uint64_t seed);

}  // namespace svid
