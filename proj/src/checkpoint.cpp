#include "svid/checkpoint.hpp"

#include <bit>
#include <cstring>

namespace svid {

namespace {

class Writer {
 public:
  explicit Writer(BlobPrecision p) : precision_(p) {}

  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void value(double v) {
    if (precision_ == BlobPrecision::f32) u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else f64(v);
  }
  void blob(const std::string& name, const Shape& shape, std::span<const double> values) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) u64(d);
    for (double v : values) value(v);
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  BlobPrecision precision_;
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : b_(b) {}

  std::size_t pos() const { return pos_; }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  double value(BlobPrecision p, const char* what) {
    if (p == BlobPrecision::f32) return static_cast<double>(std::bit_cast<float>(u32(what)));
    return f64(what);
  }
  TensorBlob blob(BlobPrecision p) {
    TensorBlob t;
    const auto name_len = u32("blob name length");
    if (name_len > 4096) fail("implausible blob name length " + std::to_string(name_len));
    t.name = bytes(name_len, "blob name");
    const auto rank = u32("blob rank");
    if (rank == 0 || rank > 8) fail("blob '" + t.name + "' has unsupported rank " + std::to_string(rank));
    std::uint64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = u64("blob extent");
      if (d == 0 || d > (1ULL << 32)) fail("blob '" + t.name + "' has invalid extent " + std::to_string(d));
      t.shape.push_back(static_cast<std::size_t>(d));
      n *= d;
      if (n > (1ULL << 34)) fail("blob '" + t.name + "' is implausibly large");
    }
    const auto width = static_cast<std::size_t>(p);
    if ((b_.size() - pos_) / width < n)
      fail("blob '" + t.name + "' declares " + std::to_string(n) + " values but the file is truncated");
    t.values.resize(static_cast<std::size_t>(n));
    for (auto& v : t.values) v = value(p, "blob values");
    return t;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw CheckpointError("checkpoint: " + msg + " (at byte " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
  }
  std::uint64_t get(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

}  // namespace

BlobPrecision parse_precision(const std::string& name) {
  if (name == "f32") return BlobPrecision::f32;
  if (name == "f64") return BlobPrecision::f64;
  throw std::invalid_argument("unknown checkpoint precision '" + name + "' (expected f32 or f64)");
}

std::string to_string(BlobPrecision p) { return p == BlobPrecision::f32 ? "f32" : "f64"; }

Checkpoint Checkpoint::capture(const Network& net, const AdamState& adam, std::uint64_t master_seed,
                               std::uint64_t step) {
  Checkpoint c;
  c.unet = net.config();
  c.master_seed = master_seed;
  c.step = step;
  for (const auto& p : net.params()) {
    const auto d = p.value.data();
    c.params.push_back({p.name, p.value.shape(), std::vector<double>(d.begin(), d.end())});
  }
  c.adam = adam;
  return c;
}

Network Checkpoint::restore() const {
  Network net = Network::build(unet);
  auto& ps = net.params();
  if (ps.size() != params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(params.size()) + " parameters, architecture needs " +
                          std::to_string(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].name != params[i].name || ps[i].value.shape() != params[i].shape)
      throw CheckpointError("checkpoint parameter '" + params[i].name + "' " + to_string(params[i].shape) +
                            " does not match '" + ps[i].name + "' " + to_string(ps[i].value.shape()));
    auto w = ps[i].value.mutable_data();
    std::copy(params[i].values.begin(), params[i].values.end(), w.begin());
  }
  return net;
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& c, BlobPrecision precision) {
  Writer w(precision);
  w.bytes("SVID");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(precision));
  w.i32(c.unet.in_channels);
  w.i32(c.unet.base_channels);
  w.i32(c.unet.depth);
  w.i32(c.unet.kernel);
  w.f64(c.unet.slope);
  w.u64(c.unet.seed);
  w.u64(c.master_seed);
  w.u64(c.step);
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  for (const auto& p : c.params) {
    if (numel(p.shape) != p.values.size()) throw CheckpointError("blob '" + p.name + "' size does not match its shape");
    w.blob(p.name, p.shape, p.values);
  }
  w.u64(c.adam.step);
  const bool moments = !c.adam.m.empty();
  if (moments && (c.adam.m.size() != c.params.size() || c.adam.v.size() != c.params.size()))
    throw CheckpointError("optimizer moments do not match the parameter list");
  w.u32(moments ? 1 : 0);
  if (moments) {
    for (std::size_t i = 0; i < c.params.size(); ++i) w.blob(c.params[i].name + ".m", c.params[i].shape, c.adam.m[i]);
    for (std::size_t i = 0; i < c.params.size(); ++i) w.blob(c.params[i].name + ".v", c.params[i].shape, c.adam.v[i]);
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  if (r.bytes(bytes.size() < 4 ? bytes.size() : 4, "magic") != "SVID") r.fail("bad magic (expected \"SVID\")");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    r.fail("format version " + std::to_string(version) + " is not supported (this build reads version " +
           std::to_string(kCheckpointVersion) + ")");
  const auto width = r.u32("precision");
  if (width != 4 && width != 8) r.fail("unknown value width " + std::to_string(width));
  const auto precision = static_cast<BlobPrecision>(width);

  Checkpoint c;
  c.unet.in_channels = r.i32("in_channels");
  c.unet.base_channels = r.i32("base_channels");
  c.unet.depth = r.i32("depth");
  c.unet.kernel = r.i32("kernel");
  c.unet.slope = r.f64("slope");
  c.unet.seed = r.u64("init seed");
  try {
    c.unet.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  c.master_seed = r.u64("master seed");
  c.step = r.u64("step");
  const auto n = r.u32("parameter count");
  if (n > 100000) r.fail("implausible parameter count " + std::to_string(n));
  for (std::uint32_t i = 0; i < n; ++i) c.params.push_back(r.blob(precision));
  c.adam.step = r.u64("optimizer step");
  const auto moments = r.u32("moment flag");
  if (moments > 1) r.fail("bad moment flag");
  if (moments) {
    for (int which = 0; which < 2; ++which)
      for (std::uint32_t i = 0; i < n; ++i) {
        auto b = r.blob(precision);
        const auto expect = c.params[i].name + (which == 0 ? ".m" : ".v");
        if (b.name != expect || b.shape != c.params[i].shape) r.fail("moment blob '" + b.name + "' out of place");
        (which == 0 ? c.adam.m : c.adam.v).push_back(std::move(b.values));
      }
  }
  if (r.pos() != bytes.size()) r.fail(std::to_string(bytes.size() - r.pos()) + " trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, BlobPrecision precision) {
  write_file_atomic(path, serialize_checkpoint(ckpt, precision));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace svid
