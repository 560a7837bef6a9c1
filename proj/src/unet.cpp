#include "svid/unet.hpp"

#include <cmath>
#include <stdexcept>

#include "svid/rng.hpp"

namespace svid {

void UNetConfig::validate() const {
  std::string errors;
  if (in_channels < 1) errors += " in_channels must be >= 1;";
  if (base_channels < 1) errors += " base_channels must be >= 1;";
  if (depth < 1 || depth > 12) errors += " depth must lie in [1,12];";
  if (kernel < 1 || kernel % 2 == 0) errors += " kernel must be odd and positive;";
  if (!(slope >= 0.0 && slope < 1.0)) errors += " slope must lie in [0,1);";
  if (!errors.empty()) throw std::invalid_argument("invalid UNetConfig:" + errors);
}

Network Network::build(const UNetConfig& config) {
  config.validate();
  Network net;
  net.config_ = config;
  Rng rng = make_stream(config.seed, Stream::init);
  const auto k = static_cast<std::size_t>(config.kernel);

  auto add_conv = [&](const std::string& name, int cin, int cout) {
    const auto fan_in = static_cast<double>(cin) * static_cast<double>(k * k);
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / fan_in));
    std::vector<double> w(static_cast<std::size_t>(cout * cin) * k * k);
    for (auto& v : w) v = he(rng);
    Conv c{net.params_.size(), net.params_.size() + 1};
    net.params_.push_back({name + ".weight", Tensor::from({std::size_t(cout), std::size_t(cin), k, k}, std::move(w), true)});
    net.params_.push_back({name + ".bias", Tensor::zeros({std::size_t(cout)}, true)});
    return c;
  };

  auto width = [&](int level) { return config.base_channels << level; };
  int cin = config.in_channels;
  for (int l = 0; l < config.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    net.encoder_.push_back(add_conv(p + ".conv1", cin, width(l)));
    net.encoder_.push_back(add_conv(p + ".conv2", width(l), width(l)));
    cin = width(l);
  }
  for (int l = config.depth - 2; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    net.decoder_.push_back(add_conv(p + ".up", width(l + 1), width(l)));
    net.decoder_.push_back(add_conv(p + ".conv1", 2 * width(l), width(l)));
    net.decoder_.push_back(add_conv(p + ".conv2", width(l), width(l)));
  }
  net.head_ = add_conv("head", width(0), config.in_channels);
  return net;
}

Tensor Network::conv(const Tensor& x, const Conv& c) const {
  return conv2d(x, params_[c.weight].value, params_[c.bias].value, 1, config_.kernel / 2);
}

Tensor Network::conv_act(const Tensor& x, const Conv& c) const { return leaky_relu(conv(x, c), config_.slope); }

Tensor Network::forward(const Tensor& y) const {
  if (y.rank() != 4 || y.dim(1) != static_cast<std::size_t>(config_.in_channels))
    throw ShapeError("unet: expected input [N," + std::to_string(config_.in_channels) + ",H,W], got " +
                     to_string(y.shape()));
  const auto m = config_.spatial_multiple();
  if (y.dim(2) % m || y.dim(3) % m) {
    const auto pad_h = (m - y.dim(2) % m) % m, pad_w = (m - y.dim(3) % m) % m;
    throw ShapeError("unet: spatial extent " + to_string(y.shape()) + " must be a multiple of " + std::to_string(m) +
                     " for depth " + std::to_string(config_.depth) + "; pad by " + std::to_string(pad_h) +
                     " rows and " + std::to_string(pad_w) + " columns");
  }

  std::vector<Tensor> skips;
  Tensor x = y;
  for (int l = 0; l < config_.depth; ++l) {
    if (l > 0) x = downsample2x(x);
    x = conv_act(x, encoder_[2 * l]);
    x = conv_act(x, encoder_[2 * l + 1]);
    skips.push_back(x);
  }
  std::size_t d = 0;
  for (int l = config_.depth - 2; l >= 0; --l, d += 3) {
    x = conv_act(upsample2x(x), decoder_[d]);
    x = concat_channels(skips[static_cast<std::size_t>(l)], x);
    x = conv_act(x, decoder_[d + 1]);
    x = conv_act(x, decoder_[d + 2]);
  }
  return conv(x, head_);
}

std::vector<Tensor> Network::param_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Network Network::clone() const {
  Network copy = *this;
  for (auto& p : copy.params_) {
    auto v = p.value.data();
    p.value = Tensor::from(p.value.shape(), std::vector<double>(v.begin(), v.end()), true);
  }
  return copy;
}

void Network::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

}  // namespace svid
