#include "svid/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#ifdef SVID_HAVE_PNG
#include <png.h>
#endif

namespace svid {

namespace {

class PnmReader {
 public:
  explicit PnmReader(std::span<const unsigned char> bytes) : b_(bytes) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  long read_uint(const char* what) {
    skip_space_and_comments();
    if (pos_ >= b_.size()) throw CodecError(std::string("header truncated before ") + what, pos_);
    if (!std::isdigit(b_[pos_])) throw CodecError(std::string("expected ") + what, pos_);
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1'000'000'000) throw CodecError(std::string(what) + " out of range", pos_);
      ++pos_;
    }
    return v;
  }

  std::span<const unsigned char> bytes() const { return b_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

int quantize(double v, int maxval) {
  if (std::isnan(v)) throw std::invalid_argument("cannot quantize NaN intensity");
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<int>(std::floor(c * maxval + 0.5));
}

ImageBuffer decode_pnm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw CodecError("not a binary PGM/PPM file (expected P5 or P6)", 0);
  const int channels = bytes[1] == '5' ? 1 : 3;
  PnmReader r(bytes);
  r.advance(2);
  const long width = r.read_uint("width");
  const long height = r.read_uint("height");
  const std::size_t maxval_at = r.pos();
  const long maxval = r.read_uint("maxval");
  if (width <= 0 || height <= 0) throw CodecError("image dimensions must be positive", maxval_at);
  if (maxval < 1 || maxval > 65535) throw CodecError("maxval must lie in [1,65535]", maxval_at);
  if (r.pos() >= bytes.size() || !std::isspace(bytes[r.pos()]))
    throw CodecError("expected a single whitespace byte after maxval", r.pos());
  r.advance(1);

  const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
  const std::size_t start = r.pos();
  if (bytes.size() - start < n * sample_bytes)
    throw CodecError("payload truncated: need " + std::to_string(n * sample_bytes) + " bytes, have " +
                         std::to_string(bytes.size() - start),
                     bytes.size());

  ImageBuffer img(static_cast<int>(width), static_cast<int>(height), channels);
  const auto plane = img.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = start + i * sample_bytes;
    const unsigned v = sample_bytes == 1 ? bytes[at] : (unsigned(bytes[at]) << 8) | bytes[at + 1];
    if (v > static_cast<unsigned>(maxval)) throw CodecError("sample exceeds maxval", at);
    // Interleaved on disk, planar in memory.
    const std::size_t pixel = i / channels, c = i % channels;
    img.pixels[c * plane + pixel] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

std::vector<unsigned char> encode_pnm(const ImageBuffer& img, int maxval) {
  if (maxval < 1 || maxval > 65535) throw std::invalid_argument("maxval must lie in [1,65535]");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const auto plane = img.plane_size();
  out.reserve(out.size() + plane * img.channels * (maxval < 256 ? 1 : 2));
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < img.channels; ++c) {
      const int q = quantize(img.pixels[static_cast<std::size_t>(c) * plane + p], maxval);
      if (maxval >= 256) out.push_back(static_cast<unsigned char>(q >> 8));
      out.push_back(static_cast<unsigned char>(q & 0xff));
    }
  return out;
}

#ifdef SVID_HAVE_PNG

bool png_supported() { return true; }

ImageBuffer decode_png(std::span<const unsigned char> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw CodecError(std::string("png: ") + image.message, 0);
  const int channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw CodecError("png: " + msg, 0);
  }
  ImageBuffer img(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  const auto plane = img.plane_size();
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.pixels[(i % channels) * plane + i / channels] = raw[i] / 255.0;
  return img;
}

std::vector<unsigned char> encode_png(const ImageBuffer& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto plane = img.plane_size();
  std::vector<unsigned char> raw(plane * img.channels);
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<unsigned char>(quantize(img.pixels[(i % img.channels) * plane + i / img.channels], 255));
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, raw.data(), 0, nullptr))
    throw IoError(std::string("png encode: ") + image.message);
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raw.data(), 0, nullptr))
    throw IoError(std::string("png encode: ") + image.message);
  out.resize(size);
  return out;
}

#else

bool png_supported() { return false; }

ImageBuffer decode_png(std::span<const unsigned char>) {
  throw IoError("PNG support was not compiled in (configure with SVID_WITH_PNG=ON)");
}

std::vector<unsigned char> encode_png(const ImageBuffer&) {
  throw IoError("PNG support was not compiled in (configure with SVID_WITH_PNG=ON)");
}

#endif

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

bool is_image_path(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || (ext == ".png" && png_supported());
}

ImageBuffer load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return lower_extension(path) == ".png" ? decode_png(bytes) : decode_pnm(bytes);
  } catch (const CodecError& e) {
    throw CodecError(path.string() + ": " + e.detail, e.offset);
  }
}

void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  if (ext == ".png") {
    write_file_atomic(path, encode_png(img));
  } else if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    if ((ext == ".pgm" && img.channels != 1) || (ext == ".ppm" && img.channels != 3))
      throw std::invalid_argument(path.string() + ": extension does not match a " + std::to_string(img.channels) +
                                  "-channel image");
    write_file_atomic(path, encode_pnm(img));
  } else {
    throw std::invalid_argument("unsupported image extension: " + path.string());
  }
}

}  // namespace svid
