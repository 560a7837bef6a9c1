#pragma once

#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "svid/image.hpp"

namespace svid {

/// Returned by psnr() for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mean_squared_error(std::span<const double> a, std::span<const double> b);
double psnr(std::span<const double> a, std::span<const double> b, double peak = 1.0);
/// Per-channel PSNR, averaged over channels.
double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Mean SSIM over the positions where the Gaussian window fits entirely.
double ssim_plane(std::span<const double> a, std::span<const double> b, int width, int height,
                  const SsimOptions& options = {});
/// Per-channel SSIM, averaged over channels.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimOptions& options = {});

struct MetricReport {
  std::vector<std::string> names;
  std::vector<double> psnr;
  std::vector<double> ssim;

  void add(std::string name, double psnr_db, double ssim_value);
  std::size_t size() const { return psnr.size(); }
  double psnr_mean() const;
  double psnr_std() const;
  double ssim_mean() const;
  double ssim_std() const;

  /// Keys: psnr_mean, psnr_std, ssim_mean, ssim_std, n_images, images[].
  /// Infinite PSNR is written as the string "inf".
  std::string to_json() const;
  /// Header: name,psnr_db,ssim
  void write_csv(std::ostream& os) const;
};

MetricReport evaluate_pairs(const std::vector<ImageBuffer>& reference, const std::vector<ImageBuffer>& test,
                            const std::vector<std::string>& names = {});

struct Histogram {
  std::vector<double> edges;          // bins + 1, strictly increasing
  std::vector<std::size_t> counts;    // bins
  std::size_t total = 0;

  std::size_t bins() const { return counts.size(); }
  std::vector<double> normalized() const;
  /// Header: bin_lo,bin_hi,count
  void write_csv(std::ostream& os) const;
};

/// Uniform bins over [-range, range]; samples outside land in the edge bins.
Histogram residual_histogram(std::span<const double> residuals, int bins, double range);
/// Total-variation distance between the normalized histograms, in [0,1].
double histogram_distance(const Histogram& a, const Histogram& b);

}  // namespace svid
