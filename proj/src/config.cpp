#include "svid/config.hpp"

#include "svid/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace svid {

namespace {

std::string join(const std::vector<std::string>& errors) {
  std::string s = "invalid config:";
  for (const auto& e : errors) s += "\n  " + e;
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty())
    throw ConfigError({key + ": cannot parse '" + v + "' as a number"});
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Entry {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Get>
Entry numeric(const std::string& key, Get field) {
  return {[key, field](RunConfig& c, const std::string& v) { field(c) = parse_number<T>(key, v); },
          [field](const RunConfig& c) {
            const T v = field(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) return format_double(v);
            else return std::to_string(v);
          }};
}

const std::map<std::string, Entry>& table() {
  static const std::map<std::string, Entry> t = [] {
    std::map<std::string, Entry> m;
    m["in_channels"] = numeric<int>("in_channels", [](RunConfig& c) -> int& { return c.unet.in_channels; });
    m["base_channels"] = numeric<int>("base_channels", [](RunConfig& c) -> int& { return c.unet.base_channels; });
    m["depth"] = numeric<int>("depth", [](RunConfig& c) -> int& { return c.unet.depth; });
    m["kernel"] = numeric<int>("kernel", [](RunConfig& c) -> int& { return c.unet.kernel; });
    m["slope"] = numeric<double>("slope", [](RunConfig& c) -> double& { return c.unet.slope; });
    m["init_seed"] = numeric<std::uint64_t>("init_seed", [](RunConfig& c) -> std::uint64_t& { return c.unet.seed; });

    m["mode"] = {[](RunConfig& c, const std::string& v) {
                   try {
                     c.train.mode = parse_train_mode(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError({std::string("mode: ") + e.what()});
                   }
                 },
                 [](const RunConfig& c) { return to_string(c.train.mode); }};
    m["y2_graph"] = {[](RunConfig& c, const std::string& v) {
                       try {
                         c.train.y2_graph = parse_y2_graph(v);
                       } catch (const std::invalid_argument& e) {
                         throw ConfigError({std::string("y2_graph: ") + e.what()});
                       }
                     },
                     [](const RunConfig& c) { return to_string(c.train.y2_graph); }};
    m["total_steps"] =
        numeric<std::uint64_t>("total_steps", [](RunConfig& c) -> std::uint64_t& { return c.train.total_steps; });
    m["lr_peak"] = numeric<double>("lr_peak", [](RunConfig& c) -> double& { return c.train.lr_peak; });
    m["decay_start"] =
        numeric<std::uint64_t>("decay_start", [](RunConfig& c) -> std::uint64_t& { return c.train.decay_start; });
    m["batch_size"] = numeric<int>("batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; });
    m["crop"] = numeric<int>("crop", [](RunConfig& c) -> int& { return c.train.crop; });
    m["mask_p"] = numeric<double>("mask_p", [](RunConfig& c) -> double& { return c.train.mask_p; });
    m["seed"] = numeric<std::uint64_t>("seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
    m["eval_every"] =
        numeric<std::uint64_t>("eval_every", [](RunConfig& c) -> std::uint64_t& { return c.train.eval_every; });
    m["warmup_steps"] =
        numeric<std::uint64_t>("warmup_steps", [](RunConfig& c) -> std::uint64_t& { return c.train.warmup_steps; });
    m["checkpoint_every"] =
        numeric<std::uint64_t>("checkpoint_every", [](RunConfig& c) -> std::uint64_t& { return c.checkpoint_every; });
    m["checkpoint_precision"] = {[](RunConfig& c, const std::string& v) {
                                   try {
                                     c.checkpoint_precision = parse_precision(v);
                                   } catch (const std::invalid_argument& e) {
                                     throw ConfigError({std::string("checkpoint_precision: ") + e.what()});
                                   }
                                 },
                                 [](const RunConfig& c) { return to_string(c.checkpoint_precision); }};

    m["noise"] = {[](RunConfig& c, const std::string& v) {
                    try {
                      c.noise.kind = parse_noise_kind(v);
                    } catch (const std::invalid_argument& e) {
                      throw ConfigError({std::string("noise: ") + e.what()});
                    }
                  },
                  [](const RunConfig& c) { return to_string(c.noise.kind); }};
    m["noise_level"] = {[](RunConfig& c, const std::string& v) { c.noise_level = v; },
                        [](const RunConfig& c) { return c.noise_level; }};
    m["noise_seed"] = numeric<std::uint64_t>("noise_seed", [](RunConfig& c) -> std::uint64_t& { return c.noise.seed; });

    m["data_dir"] = {[](RunConfig& c, const std::string& v) { c.data.data_dir = v; },
                     [](const RunConfig& c) { return c.data.data_dir; }};
    m["train_fraction"] =
        numeric<double>("train_fraction", [](RunConfig& c) -> double& { return c.data.train_fraction; });
    m["split_seed"] =
        numeric<std::uint64_t>("split_seed", [](RunConfig& c) -> std::uint64_t& { return c.data.split_seed; });
    m["synth_count"] = numeric<int>("synth_count", [](RunConfig& c) -> int& { return c.data.synth_count; });
    m["synth_size"] = numeric<int>("synth_size", [](RunConfig& c) -> int& { return c.data.synth_size; });
    m["synth_seed"] =
        numeric<std::uint64_t>("synth_seed", [](RunConfig& c) -> std::uint64_t& { return c.data.synth_seed; });
    return m;
  }();
  return t;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errs) : std::invalid_argument(join(errs)), errors(std::move(errs)) {}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, _] : table()) out.push_back(key);
    return out;
  }();
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError({"unknown key '" + key + "'"});
  it->second.set(*this, value);
}

std::string RunConfig::get(const std::string& key) const {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError({"unknown key '" + key + "'"});
  return it->second.get(*this);
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, entry] : table()) out += key + " = " + entry.get(*this) + "\n";
  return out;
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  try {
    unet.validate();
  } catch (const std::invalid_argument& e) {
    out.emplace_back(e.what());
  }
  for (auto& p : train.problems(unet)) out.push_back(std::move(p));
  try {
    NoiseSpec::parse(noise.kind, noise_level, noise.seed).validate();
  } catch (const std::invalid_argument& e) {
    out.push_back(std::string("noise_level: ") + e.what());
  }
  if (!(data.train_fraction >= 0.0 && data.train_fraction <= 1.0)) out.emplace_back("train_fraction must lie in [0,1]");
  if (data.data_dir.empty()) {
    if (data.synth_count < 1) out.emplace_back("synth_count must be >= 1");
    if (data.synth_size < 1) out.emplace_back("synth_size must be >= 1");
    else if (data.synth_size < train.crop && train.mode != TrainMode::dip)
      out.emplace_back("synth_size must be >= crop");
  }
  return out;
}

void RunConfig::finalize() {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
  noise = NoiseSpec::parse(noise.kind, noise_level, noise.seed);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::vector<std::string> errors;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(number) + ": ";
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value', got '" + line + "'");
      continue;
    }
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      errors.push_back(where + "duplicate key '" + key + "'");
      continue;
    }
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      for (const auto& msg : e.errors) errors.push_back(where + msg);
    }
  }
  for (auto& p : c.problems()) errors.push_back(std::move(p));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  c.finalize();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

TrainData load_train_data(const RunConfig& c) {
  TrainData data;
  if (c.data.data_dir.empty()) {
    // Synthetic images are split by zero-padded index so the rule matches the file case.
    auto images = shapes_dataset(c.data.synth_count, c.data.synth_size, c.data.synth_seed);
    std::vector<std::filesystem::path> ids;
    for (std::size_t i = 0; i < images.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%06zu", i);
      ids.emplace_back(name);
    }
    const auto split = split_files(ids, c.data.split_seed, c.data.train_fraction);
    for (const auto& p : split.train) data.train.push_back(images[std::stoul(p.string())]);
    for (const auto& p : split.test) data.test_clean.push_back(images[std::stoul(p.string())]);
  } else {
    const auto split = build_dataset(c.data.data_dir, c.data.split_seed, c.data.train_fraction);
    data.train = load_images(split.train);
    data.test_clean = load_images(split.test);
  }
  data.test_noisy = corrupt_for_eval(data.test_clean, c.noise);
  return data;
}

}  // namespace svid
