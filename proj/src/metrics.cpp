#include "svid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace svid {

namespace {

void require_same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw ShapeError("metric inputs differ in size: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

void require_same_image(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw ShapeError("images differ in shape: " + std::to_string(a.channels) + "x" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.channels) + "x" + std::to_string(b.height) +
                     "x" + std::to_string(b.width));
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  if (!std::isfinite(m)) return std::all_of(v.begin(), v.end(), [](double x) { return std::isinf(x); }) ? 0.0 : m;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

// Valid-mode separable filtering of one plane with a symmetric 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& src, int width, int height,
                                 const std::vector<double>& kernel) {
  const int k = static_cast<int>(kernel.size());
  const int ow = width - k + 1, oh = height - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(height) * static_cast<std::size_t>(ow));
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += kernel[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y * width + x + i)];
      rows[static_cast<std::size_t>(y * ow + x)] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow));
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += kernel[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>((y + i) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = s;
    }
  return out;
}

}  // namespace

double mean_squared_error(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double psnr(std::span<const double> a, std::span<const double> b, double peak) {
  const double e = mean_squared_error(a, b);
  if (e == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / e);
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak) {
  require_same_image(a, b);
  const auto n = a.plane_size();
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const auto off = static_cast<std::size_t>(c) * n;
    total += psnr(std::span(a.pixels).subspan(off, n), std::span(b.pixels).subspan(off, n), peak);
  }
  return total / a.channels;
}

double ssim_plane(std::span<const double> a, std::span<const double> b, int width, int height,
                  const SsimOptions& o) {
  require_same_size(a, b);
  if (a.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw ShapeError("ssim: plane size does not match " + std::to_string(width) + "x" + std::to_string(height));
  if (o.window < 1 || width < o.window || height < o.window)
    throw ShapeError("ssim: image " + std::to_string(width) + "x" + std::to_string(height) +
                     " is smaller than the " + std::to_string(o.window) + "x" + std::to_string(o.window) + " window");

  std::vector<double> kernel(static_cast<std::size_t>(o.window));
  const double center = (o.window - 1) / 2.0;
  for (int i = 0; i < o.window; ++i)
    kernel[static_cast<std::size_t>(i)] = std::exp(-(i - center) * (i - center) / (2.0 * o.sigma * o.sigma));
  const double ksum = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (auto& w : kernel) w /= ksum;

  const std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, width, height, kernel);
  const auto my = filter_valid(y, width, height, kernel);
  const auto mxx = filter_valid(xx, width, height, kernel);
  const auto myy = filter_valid(yy, width, height, kernel);
  const auto mxy = filter_valid(xy, width, height, kernel);

  const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak);
  const double c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double ux = mx[i], uy = my[i];
    const double vx = mxx[i] - ux * ux, vy = myy[i] - uy * uy, cxy = mxy[i] - ux * uy;
    total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimOptions& options) {
  require_same_image(a, b);
  const auto n = a.plane_size();
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const auto off = static_cast<std::size_t>(c) * n;
    total += ssim_plane(std::span(a.pixels).subspan(off, n), std::span(b.pixels).subspan(off, n), a.width, a.height,
                        options);
  }
  return total / a.channels;
}

// ---------------------------------------------------------------------------

void MetricReport::add(std::string name, double psnr_db, double ssim_value) {
  names.push_back(std::move(name));
  psnr.push_back(psnr_db);
  ssim.push_back(ssim_value);
}

double MetricReport::psnr_mean() const { return mean_of(psnr); }
double MetricReport::psnr_std() const { return std_of(psnr); }
double MetricReport::ssim_mean() const { return mean_of(ssim); }
double MetricReport::ssim_std() const { return std_of(ssim); }

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["psnr_mean"] = number_or_inf(psnr_mean());
  j["psnr_std"] = number_or_inf(psnr_std());
  j["ssim_mean"] = ssim_mean();
  j["ssim_std"] = ssim_std();
  j["n_images"] = size();
  auto images = nlohmann::json::array();
  for (std::size_t i = 0; i < size(); ++i)
    images.push_back({{"name", i < names.size() ? names[i] : std::to_string(i)},
                      {"psnr", number_or_inf(psnr[i])},
                      {"ssim", ssim[i]}});
  j["images"] = std::move(images);
  return j.dump(2);
}

void MetricReport::write_csv(std::ostream& os) const {
  os << "name,psnr_db,ssim\n";
  os.precision(10);
  for (std::size_t i = 0; i < size(); ++i)
    os << (i < names.size() ? names[i] : std::to_string(i)) << ',' << psnr[i] << ',' << ssim[i] << '\n';
}

MetricReport evaluate_pairs(const std::vector<ImageBuffer>& reference, const std::vector<ImageBuffer>& test,
                            const std::vector<std::string>& names) {
  if (reference.size() != test.size())
    throw std::invalid_argument("evaluate_pairs: " + std::to_string(reference.size()) + " references vs " +
                                std::to_string(test.size()) + " test images");
  MetricReport report;
  for (std::size_t i = 0; i < reference.size(); ++i)
    report.add(i < names.size() ? names[i] : std::to_string(i), psnr(reference[i], test[i]),
               ssim(reference[i], test[i]));
  return report;
}

// ---------------------------------------------------------------------------

std::vector<double> Histogram::normalized() const {
  std::vector<double> p(counts.size(), 0.0);
  if (total == 0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i) p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return p;
}

void Histogram::write_csv(std::ostream& os) const {
  os << "bin_lo,bin_hi,count\n";
  os.precision(10);
  for (std::size_t i = 0; i < counts.size(); ++i) os << edges[i] << ',' << edges[i + 1] << ',' << counts[i] << '\n';
}

Histogram residual_histogram(std::span<const double> residuals, int bins, double range) {
  if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  if (!(range > 0.0) || !std::isfinite(range)) throw std::invalid_argument("histogram range must be positive");
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = -range + 2.0 * range * i / bins;
  for (double v : residuals) {
    if (std::isnan(v)) throw std::invalid_argument("histogram sample is NaN");
    const double pos = (v + range) / (2.0 * range) * bins;
    const long idx = pos <= 0.0 ? 0 : pos >= bins ? bins - 1 : static_cast<long>(pos);
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  h.total = residuals.size();
  return h;
}

double histogram_distance(const Histogram& a, const Histogram& b) {
  if (a.edges != b.edges) throw std::invalid_argument("histogram_distance: histograms use different bins");
  if (a.total == 0 || b.total == 0) throw std::invalid_argument("histogram_distance: empty histogram");
  const auto p = a.normalized(), q = b.normalized();
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return std::min(1.0, 0.5 * tv);
}

}  // namespace svid
