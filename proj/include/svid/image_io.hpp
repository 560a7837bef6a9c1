#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svid/image.hpp"

namespace svid {

/// File could not be opened, read or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated image data; offset is the byte where decoding failed.
struct CodecError : IoError {
  CodecError(const std::string& what, std::size_t offset)
      : IoError(what + " (at byte " + std::to_string(offset) + ")"), detail(what), offset(offset) {}
  std::string detail;
  std::size_t offset;
};

/// Binary PGM (P5) or PPM (P6), maxval 1..65535. Samples map to v / maxval.
ImageBuffer decode_pnm(std::span<const unsigned char> bytes);
/// Clips to [0,1] and rounds half up to 0..maxval.
std::vector<unsigned char> encode_pnm(const ImageBuffer& img, int maxval = 255);

bool png_supported();
ImageBuffer decode_png(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_png(const ImageBuffer& img);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);

/// Dispatches on extension: .pgm .ppm .pnm, and .png when built with libpng.
ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& img, const std::filesystem::path& path);
bool is_image_path(const std::filesystem::path& path);

/// Integer level for v in [0,1] after clipping, rounding half up.
int quantize(double v, int maxval);

}  // namespace svid
