#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "svid/checkpoint.hpp"
#include "svid/noise.hpp"
#include "svid/trainer.hpp"
#include "svid/unet.hpp"

namespace svid {

/// Every problem found in a config, reported together.
struct ConfigError : std::invalid_argument {
  explicit ConfigError(std::vector<std::string> errors);
  std::vector<std::string> errors;
};

struct DataConfig {
  std::string data_dir;  // empty: synthetic shapes
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  int synth_count = 30;
  int synth_size = 64;
  std::uint64_t synth_seed = 0;
};

/// Flat `key = value` document; `#` starts a comment. Unknown keys, duplicate
/// keys and malformed values are all errors.
struct RunConfig {
  UNetConfig unet;
  TrainConfig train;
  NoiseSpec noise;
  std::string noise_level = "25";  // as written; gaussian on the 0-255 scale
  DataConfig data;
  std::uint64_t checkpoint_every = 0;
  BlobPrecision checkpoint_precision = BlobPrecision::f32;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  static const std::vector<std::string>& keys();

  /// Sets one key from its text form; throws ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Canonical document listing every key; parse(to_text()) round-trips.
  std::string to_text() const;
  /// Re-derives the noise spec and checks all cross-field constraints.
  void finalize();
  std::vector<std::string> problems() const;
};

/// Synthetic shapes (data_dir empty) or the images in data_dir, split by
/// split_seed, with the test half corrupted once from the eval stream.
TrainData load_train_data(const RunConfig& c);

}  // namespace svid
