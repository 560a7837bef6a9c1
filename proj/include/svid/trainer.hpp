#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "svid/checkpoint.hpp"
#include "svid/image.hpp"
#include "svid/metrics.hpp"
#include "svid/noise.hpp"
#include "svid/optim.hpp"
#include "svid/unet.hpp"

namespace svid {

enum class TrainMode { svid, svid_no_stopgrad, supervised, noise2noise, dip };
std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

/// How y2 is assembled in svid mode. detached: from a numeric copy of F(y),
/// so only F(y2) carries gradient. attached: y2 keeps the F(y) path and only
/// the target is stopped.
enum class Y2Graph { detached, attached };
std::string to_string(Y2Graph g);
Y2Graph parse_y2_graph(const std::string& name);

struct TrainConfig {
  std::uint64_t total_steps = 20000;
  double lr_peak = 2e-4;
  std::uint64_t decay_start = 0;  // 0: total_steps / 2
  int batch_size = 1;
  int crop = 32;
  double mask_p = 0.5;
  TrainMode mode = TrainMode::svid;
  std::uint64_t seed = 0;
  std::uint64_t eval_every = 1000;  // 0: final evaluation only
  /// Leading steps of mse(F(y), y) before the svid loss takes over.
  std::uint64_t warmup_steps = 0;
  Y2Graph y2_graph = Y2Graph::detached;

  std::uint64_t effective_decay_start() const;
  /// Every violated constraint, one message each.
  std::vector<std::string> problems(const UNetConfig& unet) const;
  void validate(const UNetConfig& unet) const;
};

struct StepReport {
  std::uint64_t step = 0;  // optimizer steps completed
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::optional<double> psnr;
};

/// mse(F(y2), Stopgrad(F(y))) with y2 = F(y) + m*(y - F(y)).
Tensor svid_loss(const Network& net, const Tensor& y, const Mask& m, Y2Graph graph = Y2Graph::detached);
/// Same forward values, no stop-gradient anywhere.
Tensor svid_loss_no_stopgrad(const Network& net, const Tensor& y, const Mask& m);

StepReport svid_step(Network& net, AdamState& adam, const Tensor& y, const Mask& m, double lr,
                     Y2Graph graph = Y2Graph::detached);
StepReport svid_step_no_stopgrad(Network& net, AdamState& adam, const Tensor& y, const Mask& m, double lr);
StepReport supervised_step(Network& net, AdamState& adam, const Tensor& y, const Tensor& x, double lr);
StepReport n2n_step(Network& net, AdamState& adam, const Tensor& y1, const Tensor& y2_indep, double lr);
/// mse(F(y), y): the DIP objective with the noisy image as input.
StepReport fidelity_step(Network& net, AdamState& adam, const Tensor& y, double lr);

struct DipSnapshot {
  std::uint64_t step = 0;
  double psnr = 0.0;      // against the clean image
  double fidelity = 0.0;  // mse(F(y), y)
  ImageBuffer output;
};

/// Fresh network trained on mse(F(y), y) for `iters` steps at constant lr;
/// snapshot at step 0 and every snapshot_every steps.
std::vector<DipSnapshot> dip_overfit(const ImageBuffer& clean, const ImageBuffer& noisy, const UNetConfig& unet,
                                     std::uint64_t iters, std::uint64_t snapshot_every, double lr);

/// |‖a-b‖² - (‖b-y‖² + ‖y-a‖² - 2<y-b, y-a>)| with a = f_y2, b = f_y.
double regularizer_expansion_check(std::span<const double> f_y, std::span<const double> f_y2,
                                   std::span<const double> y);

struct TrainData {
  std::vector<ImageBuffer> train;
  std::vector<ImageBuffer> test_clean;
  std::vector<ImageBuffer> test_noisy;
};

/// Corrupts each test image once, from the eval stream of noise.seed.
std::vector<ImageBuffer> corrupt_for_eval(const std::vector<ImageBuffer>& clean, const NoiseSpec& noise);

struct EvalSnapshot {
  std::uint64_t step = 0;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  /// Mean over test images of var(F(y)) / var(y).
  double variance_ratio = 0.0;
  /// TV distance between histograms of y - F(y) and the true noise y - x.
  double tv_nhat_n = 0.0;
};

struct HistogramSet {
  Histogram n, n_hat, n2;
};

/// Residual histograms over a set of noisy/clean pairs; n2 uses one mask per
/// image from the mask stream of `seed`.
HistogramSet residual_histograms(const Network& net, const std::vector<ImageBuffer>& clean,
                                 const std::vector<ImageBuffer>& noisy, int bins, double range, double mask_p,
                                 std::uint64_t seed);

EvalSnapshot evaluate(const Network& net, const TrainData& data, std::uint64_t step);
/// Any image size: pads by edge replication to the network's spatial multiple.
ImageBuffer denoise_image(const Network& net, const ImageBuffer& noisy);
std::vector<ImageBuffer> denoise_all(const Network& net, const std::vector<ImageBuffer>& noisy);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // logs and checkpoints
  std::optional<Checkpoint> resume;
  /// Stop (as if interrupted) once this many steps are done.
  std::optional<std::uint64_t> stop_at;
  std::uint64_t checkpoint_every = 0;
  BlobPrecision precision = BlobPrecision::f32;
  std::function<void(const StepReport&)> on_step;
  std::function<void(const EvalSnapshot&)> on_eval;
};

struct TrainResult {
  Network net;
  AdamState adam;
  std::uint64_t step = 0;
  std::vector<StepReport> log;
  std::vector<EvalSnapshot> evals;
};

TrainResult train(const TrainData& data, const UNetConfig& unet, const TrainConfig& cfg, const NoiseSpec& noise,
                  const TrainOptions& options = {});

/// Header: step,loss,lr,grad_norm,psnr
void write_step_log(std::ostream& os, const std::vector<StepReport>& log, bool header = true);
/// Header: step,psnr_mean,ssim_mean,variance_ratio,tv_nhat_n
void write_eval_log(std::ostream& os, const std::vector<EvalSnapshot>& evals, bool header = true);

}  // namespace svid
