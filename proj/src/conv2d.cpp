// 2-D cross-correlation via im2col + GEMM. Eigen runs single-threaded here.
// Its vectorized kernels peel loops by pointer alignment, so every GEMM
// operand lives in an Eigen-allocated (aligned) matrix; mapping arbitrary
// heap buffers would make the summation order, and the last bits, depend on
// where malloc put them.

#include <algorithm>

#include <Eigen/Core>

#include "svid/tensor.hpp"

namespace svid {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t cin, h, w, kh, kw, ho, wo;
  int stride, pad;

  std::size_t rows() const { return cin * kh * kw; }
  std::size_t cols() const { return ho * wo; }
};

// col[(c*kh + ki)*kw + kj][oi*wo + oj] = x[c][oi*stride + ki - pad][oj*stride + kj - pad]
void im2col(const ConvGeometry& g, const double* x, double* col) {
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const auto ii = static_cast<long>(oi * g.stride + ki) - g.pad;
          double* dst = row + oi * g.wo;
          if (ii < 0 || ii >= static_cast<long>(g.h)) {
            std::fill_n(dst, g.wo, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const auto jj = static_cast<long>(oj * g.stride + kj) - g.pad;
            dst[oj] = (jj < 0 || jj >= static_cast<long>(g.w)) ? 0.0 : src[jj];
          }
        }
      }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dx) {
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const auto ii = static_cast<long>(oi * g.stride + ki) - g.pad;
          if (ii < 0 || ii >= static_cast<long>(g.h)) continue;
          double* dst = dx + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          const double* src = row + oi * g.wo;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const auto jj = static_cast<long>(oj * g.stride + kj) - g.pad;
            if (jj >= 0 && jj < static_cast<long>(g.w)) dst[jj] += src[oj];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  auto fail = [&](const std::string& why) {
    throw ShapeError("conv2d: " + why + " (input " + to_string(input.shape()) + ", weight " +
                     to_string(weight.shape()) + (bias.defined() ? ", bias " + to_string(bias.shape()) : "") +
                     ")");
  };
  if (input.rank() != 4 || weight.rank() != 4) fail("input and weight must be 4-D");
  if (stride < 1) fail("stride must be >= 1");
  if (padding < 0) fail("padding must be >= 0");
  const auto N = input.dim(0), Cout = weight.dim(0);
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(2), weight.dim(3), 0, 0, stride, padding};
  if (weight.dim(1) != g.cin) fail("channel mismatch");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Cout)) fail("bias must have one entry per output channel");
  const auto hp = g.h + 2 * static_cast<std::size_t>(padding), wp = g.w + 2 * static_cast<std::size_t>(padding);
  if (g.kh > hp || g.kw > wp) fail("kernel does not fit the padded input");
  g.ho = (hp - g.kh) / static_cast<std::size_t>(stride) + 1;
  g.wo = (wp - g.kw) / static_cast<std::size_t>(stride) + 1;

  const auto K = g.rows(), P = g.cols();
  const auto in_stride = g.cin * g.h * g.w;
  const auto rows = static_cast<Eigen::Index>(Cout), k = static_cast<Eigen::Index>(K), p = static_cast<Eigen::Index>(P);
  std::vector<double> out(N * Cout * P);
  RowMatrix col(k, p), Y(rows, p);
  const RowMatrix W = ConstMatrixMap(weight.data().data(), rows, k);
  for (std::size_t n = 0; n < N; ++n) {
    im2col(g, input.data().data() + n * in_stride, col.data());
    Y.noalias() = W * col;
    double* dst = out.data() + n * Cout * P;
    for (std::size_t co = 0; co < Cout; ++co) {
      const double b = bias.defined() ? bias.data()[co] : 0.0;
      for (std::size_t j = 0; j < P; ++j) dst[co * P + j] = Y.data()[co * P + j] + b;
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("conv2d", {N, Cout, g.ho, g.wo}, std::move(out), std::move(inputs), [=](Node& node) {
    const auto& x = node.inputs[0]->data;
    auto dx = node.input_grad(0);
    auto dw = node.input_grad(1);
    auto db = node.inputs.size() > 2 ? node.input_grad(2) : std::span<double>{};
    RowMatrix buf(k, p), dW = RowMatrix::Zero(rows, k);
    RowMatrix Wt;
    if (!dx.empty()) Wt = ConstMatrixMap(node.inputs[1]->data.data(), rows, k).transpose();
    for (std::size_t n = 0; n < N; ++n) {
      const double* grad = node.grad.data() + n * Cout * P;
      const RowMatrix G = ConstMatrixMap(grad, rows, p);
      if (!dw.empty()) {
        im2col(g, x.data() + n * in_stride, buf.data());
        dW.noalias() += G * buf.transpose();
      }
      if (!db.empty())
        for (std::size_t co = 0; co < Cout; ++co) {
          double s = 0.0;
          for (std::size_t j = 0; j < P; ++j) s += grad[co * P + j];
          db[co] += s;
        }
      if (!dx.empty()) {
        buf.noalias() = Wt * G;
        col2im_add(g, buf.data(), dx.data() + n * in_stride);
      }
    }
    if (!dw.empty())
      for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += dW.data()[i];
  });
}

}  // namespace svid
