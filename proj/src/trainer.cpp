#include "svid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "svid/dataset.hpp"
#include "svid/rng.hpp"

namespace svid {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::svid: return "svid";
    case TrainMode::svid_no_stopgrad: return "svid_no_stopgrad";
    case TrainMode::supervised: return "supervised";
    case TrainMode::noise2noise: return "noise2noise";
    case TrainMode::dip: return "dip";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& name) {
  for (auto m : {TrainMode::svid, TrainMode::svid_no_stopgrad, TrainMode::supervised, TrainMode::noise2noise,
                 TrainMode::dip})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown mode '" + name +
                              "' (expected svid, svid_no_stopgrad, supervised, noise2noise or dip)");
}

std::string to_string(Y2Graph g) { return g == Y2Graph::detached ? "detached" : "attached"; }

Y2Graph parse_y2_graph(const std::string& name) {
  if (name == "detached") return Y2Graph::detached;
  if (name == "attached") return Y2Graph::attached;
  throw std::invalid_argument("unknown y2_graph '" + name + "' (expected detached or attached)");
}

std::uint64_t TrainConfig::effective_decay_start() const { return decay_start ? decay_start : total_steps / 2; }

std::vector<std::string> TrainConfig::problems(const UNetConfig& unet) const {
  std::vector<std::string> out;
  if (total_steps > 0 && (effective_decay_start() == 0 || effective_decay_start() > total_steps))
    out.push_back("decay_start must lie in (0, total_steps]");
  if (!(lr_peak >= 0.0) || !std::isfinite(lr_peak)) out.push_back("lr_peak must be finite and >= 0");
  if (batch_size < 1) out.push_back("batch_size must be >= 1");
  if (crop < 1) out.push_back("crop must be positive");
  else if (unet.depth >= 1 && unet.depth <= 12 && crop % static_cast<int>(unet.spatial_multiple()) != 0)
    out.push_back("crop " + std::to_string(crop) + " must be divisible by " + std::to_string(unet.spatial_multiple()) +
                  " for depth " + std::to_string(unet.depth));
  if (!(mask_p > 0.0 && mask_p < 1.0)) out.push_back("mask_p must lie in (0,1)");
  return out;
}

void TrainConfig::validate(const UNetConfig& unet) const {
  const auto p = problems(unet);
  if (p.empty()) return;
  std::string msg = "invalid TrainConfig:";
  for (const auto& s : p) msg += " " + s + ";";
  throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------

Tensor svid_loss(const Network& net, const Tensor& y, const Mask& m, Y2Graph graph) {
  const Tensor f_y = net.forward(y);
  const Tensor eta = stop_gradient(f_y);
  const Tensor y2 = degrade(graph == Y2Graph::detached ? eta : f_y, y, m);
  return mse(net.forward(y2), eta);
}

Tensor svid_loss_no_stopgrad(const Network& net, const Tensor& y, const Mask& m) {
  const Tensor f_y = net.forward(y);
  return mse(net.forward(degrade(f_y, y, m)), f_y);
}

namespace {

StepReport apply(Network& net, AdamState& adam, const Tensor& loss, double lr) {
  const double value = loss.item();
  if (!std::isfinite(value))
    throw NumericalError("non-finite loss " + std::to_string(value) + " at step " + std::to_string(adam.step + 1));
  net.zero_grad();
  backward(loss);
  const auto params = net.param_tensors();
  StepReport r;
  r.loss = value;
  r.lr = lr;
  r.grad_norm = grad_norm(params);
  adam_step(params, adam, lr);
  r.step = adam.step;
  return r;
}

double plane_variance(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

Tensor stack(const std::vector<ImageBuffer>& images) {
  const auto& first = images.front();
  std::vector<double> values;
  values.reserve(images.size() * first.pixels.size());
  for (const auto& img : images) values.insert(values.end(), img.pixels.begin(), img.pixels.end());
  return Tensor::from({images.size(), static_cast<std::size_t>(first.channels), static_cast<std::size_t>(first.height),
                       static_cast<std::size_t>(first.width)},
                      std::move(values));
}

ImageBuffer crop_region(const ImageBuffer& img, int width, int height) {
  ImageBuffer out(width, height, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, y, x);
  return out;
}

ImageBuffer corrupt(const ImageBuffer& clean, const NoiseSpec& noise, Rng& rng) {
  const double level = noise.sample_level(rng);
  return ImageBuffer(clean.width, clean.height, clean.channels, add_noise(clean.pixels, noise.kind, level, rng));
}

}  // namespace

StepReport svid_step(Network& net, AdamState& adam, const Tensor& y, const Mask& m, double lr, Y2Graph graph) {
  return apply(net, adam, svid_loss(net, y, m, graph), lr);
}

StepReport svid_step_no_stopgrad(Network& net, AdamState& adam, const Tensor& y, const Mask& m, double lr) {
  return apply(net, adam, svid_loss_no_stopgrad(net, y, m), lr);
}

StepReport supervised_step(Network& net, AdamState& adam, const Tensor& y, const Tensor& x, double lr) {
  return apply(net, adam, mse(net.forward(y), x), lr);
}

StepReport n2n_step(Network& net, AdamState& adam, const Tensor& y1, const Tensor& y2_indep, double lr) {
  return apply(net, adam, mse(net.forward(y1), y2_indep), lr);
}

StepReport fidelity_step(Network& net, AdamState& adam, const Tensor& y, double lr) {
  return apply(net, adam, mse(net.forward(y), y), lr);
}

std::vector<DipSnapshot> dip_overfit(const ImageBuffer& clean, const ImageBuffer& noisy, const UNetConfig& unet,
                                     std::uint64_t iters, std::uint64_t snapshot_every, double lr) {
  if (clean.width != noisy.width || clean.height != noisy.height || clean.channels != noisy.channels)
    throw ShapeError("dip_overfit: clean and noisy images differ in shape");
  Network net = Network::build(unet);
  AdamState adam;
  const Tensor y = noisy.to_tensor();
  std::vector<DipSnapshot> snaps;
  auto snapshot = [&](std::uint64_t step) {
    NoGradGuard guard;
    const Tensor out = net.forward(y);
    DipSnapshot s;
    s.step = step;
    s.output = ImageBuffer::from_tensor(out);
    s.psnr = psnr(clean, s.output);
    s.fidelity = mean_squared_error(out.data(), y.data());
    snaps.push_back(std::move(s));
  };
  snapshot(0);
  for (std::uint64_t t = 0; t < iters; ++t) {
    fidelity_step(net, adam, y, lr);
    if (snapshot_every && (t + 1) % snapshot_every == 0) snapshot(t + 1);
  }
  if (snaps.back().step != iters) snapshot(iters);
  return snaps;
}

double regularizer_expansion_check(std::span<const double> f_y, std::span<const double> f_y2,
                                   std::span<const double> y) {
  if (f_y.size() != f_y2.size() || f_y.size() != y.size())
    throw ShapeError("regularizer_expansion_check: inputs differ in size");
  double lhs = 0.0, fid = 0.0, rec = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    lhs += (f_y2[i] - f_y[i]) * (f_y2[i] - f_y[i]);
    fid += (f_y[i] - y[i]) * (f_y[i] - y[i]);
    rec += (y[i] - f_y2[i]) * (y[i] - f_y2[i]);
    cross += (y[i] - f_y[i]) * (y[i] - f_y2[i]);
  }
  return std::abs(lhs - (fid + rec - 2.0 * cross));
}

// ---------------------------------------------------------------------------

std::vector<ImageBuffer> corrupt_for_eval(const std::vector<ImageBuffer>& clean, const NoiseSpec& noise) {
  std::vector<ImageBuffer> out;
  out.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    Rng rng = make_stream(noise.seed, Stream::eval, i);
    out.push_back(corrupt(clean[i], noise, rng));
  }
  return out;
}

ImageBuffer denoise_image(const Network& net, const ImageBuffer& noisy) {
  NoGradGuard guard;
  const int m = static_cast<int>(net.config().spatial_multiple());
  const int w = (noisy.width + m - 1) / m * m, h = (noisy.height + m - 1) / m * m;
  if (w == noisy.width && h == noisy.height) return ImageBuffer::from_tensor(net.forward(noisy.to_tensor()));
  // Edge-replicate up to the next multiple, then crop the result back.
  ImageBuffer padded(w, h, noisy.channels);
  for (int c = 0; c < noisy.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) padded.at(c, y, x) = noisy.at(c, std::min(y, noisy.height - 1), std::min(x, noisy.width - 1));
  const auto out = ImageBuffer::from_tensor(net.forward(padded.to_tensor()));
  return crop_region(out, noisy.width, noisy.height);
}

std::vector<ImageBuffer> denoise_all(const Network& net, const std::vector<ImageBuffer>& noisy) {
  std::vector<ImageBuffer> out;
  out.reserve(noisy.size());
  for (const auto& img : noisy) out.push_back(denoise_image(net, img));
  return out;
}

HistogramSet residual_histograms(const Network& net, const std::vector<ImageBuffer>& clean,
                                 const std::vector<ImageBuffer>& noisy, int bins, double range, double mask_p,
                                 std::uint64_t seed) {
  if (clean.size() != noisy.size()) throw std::invalid_argument("residual_histograms: clean/noisy count mismatch");
  const auto outputs = denoise_all(net, noisy);
  std::vector<double> n, n_hat, n2;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const auto& y = noisy[i].pixels;
    Rng rng = make_stream(seed, Stream::mask, i);
    const auto m = sample_mask({y.size()}, mask_p, rng);
    for (std::size_t j = 0; j < y.size(); ++j) {
      n.push_back(y[j] - clean[i].pixels[j]);
      n_hat.push_back(y[j] - outputs[i].pixels[j]);
      n2.push_back(m.values()[j] * n_hat.back());
    }
  }
  return {residual_histogram(n, bins, range), residual_histogram(n_hat, bins, range),
          residual_histogram(n2, bins, range)};
}

EvalSnapshot evaluate(const Network& net, const TrainData& data, std::uint64_t step) {
  const Network frozen = net.clone();
  const auto outputs = denoise_all(frozen, data.test_noisy);
  EvalSnapshot s;
  s.step = step;
  if (outputs.empty()) return s;
  double ratio = 0.0;
  std::vector<double> n, n_hat;
  MetricReport report;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    report.add(std::to_string(i), psnr(data.test_clean[i], outputs[i]), ssim(data.test_clean[i], outputs[i]));
    ratio += plane_variance(outputs[i].pixels) / plane_variance(data.test_noisy[i].pixels);
    for (std::size_t j = 0; j < outputs[i].pixels.size(); ++j) {
      n.push_back(data.test_noisy[i].pixels[j] - data.test_clean[i].pixels[j]);
      n_hat.push_back(data.test_noisy[i].pixels[j] - outputs[i].pixels[j]);
    }
  }
  s.psnr_mean = report.psnr_mean();
  s.ssim_mean = report.ssim_mean();
  s.variance_ratio = ratio / static_cast<double>(outputs.size());
  s.tv_nhat_n = histogram_distance(residual_histogram(n_hat, 101, 0.5), residual_histogram(n, 101, 0.5));
  return s;
}

// ---------------------------------------------------------------------------

TrainResult train(const TrainData& data, const UNetConfig& unet, const TrainConfig& cfg, const NoiseSpec& noise,
                  const TrainOptions& options) {
  unet.validate();
  cfg.validate(unet);
  noise.validate();
  if (data.train.empty()) throw std::invalid_argument("training set is empty");
  if (data.test_clean.size() != data.test_noisy.size())
    throw std::invalid_argument("test set has mismatched clean/noisy counts");
  const bool dip = cfg.mode == TrainMode::dip;
  if (!dip)
    for (const auto& img : data.train)
      if (img.width < cfg.crop || img.height < cfg.crop)
        throw std::invalid_argument("training image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                    " is smaller than crop " + std::to_string(cfg.crop));

  TrainResult result{options.resume ? options.resume->restore() : Network::build(unet), {}, 0, {}, {}};
  if (options.resume) {
    if (!(options.resume->unet == unet)) throw std::invalid_argument("resume checkpoint has a different architecture");
    if (options.resume->master_seed != cfg.seed)
      throw std::invalid_argument("resume checkpoint seed " + std::to_string(options.resume->master_seed) +
                                  " differs from config seed " + std::to_string(cfg.seed));
    if (options.resume->step > cfg.total_steps) throw std::invalid_argument("resume checkpoint is past total_steps");
    result.adam = options.resume->adam;
    result.step = options.resume->step;
  }
  Network& net = result.net;

  // DIP trains on the full first image with one fixed corruption.
  const ImageBuffer dip_clean = data.train.front();
  Tensor dip_y;
  if (dip) {
    Rng rng = make_stream(noise.seed, Stream::eval, 0);
    dip_y = corrupt(dip_clean, noise, rng).to_tensor();
  }

  auto save = [&](const std::string& name) {
    if (!options.out_dir) return;
    save_checkpoint(Checkpoint::capture(net, result.adam, cfg.seed, result.step), *options.out_dir / name,
                    options.precision);
  };
  auto eval_now = [&] {
    EvalSnapshot s;
    if (dip) {
      NoGradGuard guard;
      s.step = result.step;
      const auto out = ImageBuffer::from_tensor(net.forward(dip_y));
      s.psnr_mean = psnr(dip_clean, out);
      s.ssim_mean = ssim(dip_clean, out);
    } else {
      s = evaluate(net, data, result.step);
    }
    result.evals.push_back(s);
    if (!result.log.empty() && result.log.back().step == result.step) result.log.back().psnr = s.psnr_mean;
    if (options.on_eval) options.on_eval(s);
  };

  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);
  if (result.step == 0 && cfg.eval_every) eval_now();

  const auto decay = cfg.effective_decay_start();
  const std::uint64_t end = options.stop_at ? std::min(*options.stop_at, cfg.total_steps) : cfg.total_steps;
  const auto crop_shape = Shape{static_cast<std::size_t>(cfg.batch_size),
                                static_cast<std::size_t>(data.train.front().channels),
                                static_cast<std::size_t>(cfg.crop), static_cast<std::size_t>(cfg.crop)};
  while (result.step < end) {
    const std::uint64_t t = result.step;
    const double lr = lr_schedule(t, cfg.total_steps, cfg.lr_peak, decay);

    StepReport report;
    try {
      if (dip) {
        report = fidelity_step(net, result.adam, dip_y, lr);
      } else {
        Rng sample_rng = make_stream(cfg.seed, Stream::sample, t);
        Rng noise_rng = make_stream(cfg.seed, Stream::noise, t);
        std::vector<ImageBuffer> clean, noisy, second;
        for (int b = 0; b < cfg.batch_size; ++b) {
          const auto& img = data.train[static_cast<std::size_t>(sample_rng() % data.train.size())];
          clean.push_back(random_crop(img, cfg.crop, sample_rng));
          noisy.push_back(corrupt(clean.back(), noise, noise_rng));
        }
        const Tensor y = stack(noisy);
        switch (cfg.mode) {
          case TrainMode::svid:
          case TrainMode::svid_no_stopgrad: {
            if (t < cfg.warmup_steps) {
              report = fidelity_step(net, result.adam, y, lr);
              break;
            }
            Rng mask_rng = make_stream(cfg.seed, Stream::mask, t);
            const Mask m = sample_mask(crop_shape, cfg.mask_p, mask_rng);
            report = cfg.mode == TrainMode::svid ? svid_step(net, result.adam, y, m, lr, cfg.y2_graph)
                                                 : svid_step_no_stopgrad(net, result.adam, y, m, lr);
            break;
          }
          case TrainMode::supervised:
            report = supervised_step(net, result.adam, y, stack(clean), lr);
            break;
          case TrainMode::noise2noise: {
            Rng pair_rng = make_stream(cfg.seed, Stream::pair, t);
            for (const auto& c : clean) second.push_back(corrupt(c, noise, pair_rng));
            report = n2n_step(net, result.adam, y, stack(second), lr);
            break;
          }
          case TrainMode::dip:
            break;
        }
      }
    } catch (const NumericalError&) {
      save("last_good.svid");
      throw;
    }
    result.step = report.step = t + 1;
    result.log.push_back(report);
    if (options.on_step) options.on_step(report);
    if (cfg.eval_every && result.step % cfg.eval_every == 0) eval_now();
    if (options.checkpoint_every && result.step % options.checkpoint_every == 0) save("last.svid");
  }
  if (result.step == cfg.total_steps && (result.evals.empty() || result.evals.back().step != result.step)) eval_now();

  if (options.out_dir) {
    save(result.step == cfg.total_steps ? "final.svid" : "last.svid");
    // A resumed run appends to the logs of the run it continues.
    const auto log_path = *options.out_dir / "log.csv", eval_path = *options.out_dir / "eval.csv";
    const bool append = options.resume && std::filesystem::exists(log_path) && std::filesystem::exists(eval_path);
    const auto mode = append ? std::ios::app : std::ios::trunc;
    std::ofstream log(log_path, std::ios::out | mode);
    write_step_log(log, result.log, !append);
    std::ofstream evals(eval_path, std::ios::out | mode);
    write_eval_log(evals, result.evals, !append);
    if (!log || !evals) throw IoError("cannot write logs into " + options.out_dir->string());
  }
  return result;
}

void write_step_log(std::ostream& os, const std::vector<StepReport>& log, bool header) {
  if (header) os << "step,loss,lr,grad_norm,psnr\n";
  os.precision(17);
  for (const auto& r : log) {
    os << r.step << ',' << r.loss << ',' << r.lr << ',' << r.grad_norm << ',';
    if (r.psnr) os << *r.psnr;
    os << '\n';
  }
}

void write_eval_log(std::ostream& os, const std::vector<EvalSnapshot>& evals, bool header) {
  if (header) os << "step,psnr_mean,ssim_mean,variance_ratio,tv_nhat_n\n";
  os.precision(10);
  for (const auto& e : evals)
    os << e.step << ',' << e.psnr_mean << ',' << e.ssim_mean << ',' << e.variance_ratio << ',' << e.tv_nhat_n << '\n';
}

}  // namespace svid
