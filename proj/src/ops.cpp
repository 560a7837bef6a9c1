#include <algorithm>
#include <cmath>

#include "svid/tensor.hpp"

namespace svid {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

void require_rank4(const char* op, const Tensor& t) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + to_string(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto n = a.size();
  std::vector<double> out(n);
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [n](Node& node) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto g = node.input_grad(k); !g.empty())
        for (std::size_t i = 0; i < n; ++i) g[i] += node.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto n = a.size();
  std::vector<double> out(n);
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [n](Node& node) {
    if (auto g = node.input_grad(0); !g.empty())
      for (std::size_t i = 0; i < n; ++i) g[i] += node.grad[i];
    if (auto g = node.input_grad(1); !g.empty())
      for (std::size_t i = 0; i < n; ++i) g[i] -= node.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto n = a.size();
  std::vector<double> out(n);
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [n](Node& node) {
    auto x = std::span<const double>(node.inputs[0]->data);
    auto y = std::span<const double>(node.inputs[1]->data);
    if (auto g = node.input_grad(0); !g.empty())
      for (std::size_t i = 0; i < n; ++i) g[i] += node.grad[i] * y[i];
    if (auto g = node.input_grad(1); !g.empty())
      for (std::size_t i = 0; i < n; ++i) g[i] += node.grad[i] * x[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  const auto n = a.size();
  std::vector<double> out(n);
  auto x = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = factor * x[i];
  return make_result("scale", a.shape(), std::move(out), {a}, [n, factor](Node& node) {
    auto g = node.input_grad(0);
    for (std::size_t i = 0; i < n; ++i) g[i] += factor * node.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const auto n = a.size();
  return make_result("sum", {}, {s}, {a}, [n](Node& node) {
    auto g = node.input_grad(0);
    const double go = node.grad[0];
    for (std::size_t i = 0; i < n; ++i) g[i] += go;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape("mse", a, b);
  const auto n = a.size();
  std::vector<double> diff(n);
  auto x = a.data(), y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = x[i] - y[i];
    s += diff[i] * diff[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return make_result("mse", {}, {s * inv_n}, {a, b}, [diff = std::move(diff), inv_n](Node& node) {
    const double c = 2.0 * inv_n * node.grad[0];
    if (auto g = node.input_grad(0); !g.empty())
      for (std::size_t i = 0; i < diff.size(); ++i) g[i] += c * diff[i];
    if (auto g = node.input_grad(1); !g.empty())
      for (std::size_t i = 0; i < diff.size(); ++i) g[i] -= c * diff[i];
  });
}

Tensor leaky_relu(const Tensor& input, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu: slope must lie in [0,1)");
  const auto n = input.size();
  std::vector<double> out(n);
  auto x = input.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return make_result("leaky_relu", input.shape(), std::move(out), {input}, [n, slope](Node& node) {
    auto x = std::span<const double>(node.inputs[0]->data);
    auto g = node.input_grad(0);
    // The subgradient at exactly zero is the slope.
    for (std::size_t i = 0; i < n; ++i) g[i] += node.grad[i] * (x[i] > 0.0 ? 1.0 : slope);
  });
}

Tensor downsample2x(const Tensor& input) {
  require_rank4("downsample2x", input);
  const auto N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 || W % 2) throw ShapeError("downsample2x: spatial extent must be even, got " + to_string(input.shape()));
  const auto Ho = H / 2, Wo = W / 2;
  std::vector<double> out(N * C * Ho * Wo);
  auto x = input.data();
  for (std::size_t p = 0; p < N * C; ++p) {
    const double* src = x.data() + p * H * W;
    double* dst = out.data() + p * Ho * Wo;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        const double* r0 = src + 2 * i * W + 2 * j;
        const double* r1 = r0 + W;
        dst[i * Wo + j] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  return make_result("downsample2x", {N, C, Ho, Wo}, std::move(out), {input}, [=](Node& node) {
    auto g = node.input_grad(0);
    for (std::size_t p = 0; p < N * C; ++p) {
      double* dst = g.data() + p * H * W;
      const double* go = node.grad.data() + p * Ho * Wo;
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          const double v = 0.25 * go[i * Wo + j];
          double* r0 = dst + 2 * i * W + 2 * j;
          double* r1 = r0 + W;
          r0[0] += v;
          r0[1] += v;
          r1[0] += v;
          r1[1] += v;
        }
    }
  });
}

Tensor upsample2x(const Tensor& input) {
  require_rank4("upsample2x", input);
  const auto N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const auto Ho = H * 2, Wo = W * 2;
  std::vector<double> out(N * C * Ho * Wo);
  auto x = input.data();
  for (std::size_t p = 0; p < N * C; ++p) {
    const double* src = x.data() + p * H * W;
    double* dst = out.data() + p * Ho * Wo;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) dst[i * Wo + j] = src[(i / 2) * W + j / 2];
  }
  return make_result("upsample2x", {N, C, Ho, Wo}, std::move(out), {input}, [=](Node& node) {
    auto g = node.input_grad(0);
    for (std::size_t p = 0; p < N * C; ++p) {
      double* dst = g.data() + p * H * W;
      const double* go = node.grad.data() + p * Ho * Wo;
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) dst[(i / 2) * W + j / 2] += go[i * Wo + j];
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (!b.defined()) return a;
  if (!a.defined()) return b;
  require_rank4("concat_channels", a);
  require_rank4("concat_channels", b);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: batch/spatial mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  const auto N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  const auto sa = Ca * HW, sb = Cb * HW;
  std::vector<double> out(N * (sa + sb));
  auto x = a.data(), y = b.data();
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(x.data() + n * sa, sa, out.data() + n * (sa + sb));
    std::copy_n(y.data() + n * sb, sb, out.data() + n * (sa + sb) + sa);
  }
  return make_result("concat_channels", {N, Ca + Cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                     [=](Node& node) {
                       if (auto g = node.input_grad(0); !g.empty())
                         for (std::size_t n = 0; n < N; ++n)
                           for (std::size_t i = 0; i < sa; ++i) g[n * sa + i] += node.grad[n * (sa + sb) + i];
                       if (auto g = node.input_grad(1); !g.empty())
                         for (std::size_t n = 0; n < N; ++n)
                           for (std::size_t i = 0; i < sb; ++i)
                             g[n * sb + i] += node.grad[n * (sa + sb) + sa + i];
                     });
}

}  // namespace svid
