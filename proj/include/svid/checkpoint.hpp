#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "svid/image_io.hpp"
#include "svid/optim.hpp"
#include "svid/unet.hpp"

namespace svid {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : IoError {
  using IoError::IoError;
};

struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool operator==(const TensorBlob&) const = default;
};

enum class BlobPrecision : std::uint32_t { f32 = 4, f64 = 8 };

/// Layout (all integers and floats little-endian):
///   "SVID" u32 version u32 bytes_per_value
///   unet: i32 in_channels i32 base_channels i32 depth i32 kernel f64 slope u64 seed
///   u64 master_seed u64 step
///   u32 n_params, then per param: u32 name_len, name, u32 rank, u64 dims[rank], values
///   u64 adam_step u32 has_moments, then (if set) m and v blobs in param order
struct Checkpoint {
  UNetConfig unet;
  std::uint64_t master_seed = 0;
  std::uint64_t step = 0;
  std::vector<TensorBlob> params;
  AdamState adam;

  static Checkpoint capture(const Network& net, const AdamState& adam, std::uint64_t master_seed,
                            std::uint64_t step);
  /// Rebuilds the network; names and shapes must match the architecture.
  Network restore() const;
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt, BlobPrecision precision = BlobPrecision::f32);
Checkpoint parse_checkpoint(std::span<const unsigned char> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path,
                     BlobPrecision precision = BlobPrecision::f32);
Checkpoint load_checkpoint(const std::filesystem::path& path);

BlobPrecision parse_precision(const std::string& name);
std::string to_string(BlobPrecision p);

}  // namespace svid
