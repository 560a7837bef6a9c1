#pragma once

// Dense double-precision tensors with a tape-free reverse-mode autodiff graph.
//
// Every non-leaf tensor owns a shared_ptr to the Node that produced it; nodes
// hold their inputs, so the graph lives exactly as long as the outputs that
// reference it. backward() walks the graph once and then marks it consumed.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace svid {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised for incompatible operand shapes. The message names every shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for misuse of the differentiation graph (double backward,
/// non-scalar loss, ...).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated iff requires_grad on a leaf
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
  std::shared_ptr<TensorImpl> detached_from;  // forward-only edge left by stop_gradient
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }

  std::span<const double> data() const;
  /// In-place access for leaves (parameters, inputs under finite differencing).
  /// Throws GraphError on a tensor produced by an op.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  bool is_leaf() const;
  /// Leaf gradient buffer; empty for tensors that do not require grad.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// A new leaf holding a copy of the values, outside any graph.
  Tensor detached_copy() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Graph internals, exposed for op implementations and graph inspection.

struct Node {
  using BackwardFn = std::function<void(Node&)>;

  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::vector<double> grad;                        // dLoss/dOutput, filled during backward
  std::size_t output_size = 0;
  BackwardFn backward;
  bool consumed = false;

  /// Gradient accumulator for inputs[i]; empty when that input needs no grad.
  std::span<double> input_grad(std::size_t i);
};

/// Creates the output tensor of an op. A node is attached only when grad mode
/// is on and at least one input requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, Node::BackwardFn backward);

/// Populates leaf gradients with dLoss/dLeaf. Leaf gradients accumulate across
/// distinct graphs; running backward twice on one graph throws GraphError.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. 4-D tensors use NCHW layout.

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);
Tensor leaky_relu(const Tensor& input, double slope);
Tensor downsample2x(const Tensor& input);
Tensor upsample2x(const Tensor& input);
/// Channel concatenation; an undefined `b` acts as an empty channel set.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor stop_gradient(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);

// ---------------------------------------------------------------------------
// Stop-gradient value capture, used by the finite-difference checker so that
// perturbed re-evaluations see the detached values of the unperturbed point.

class StopGradientTape {
 public:
  enum class Mode { record, replay };
  explicit StopGradientTape(Mode mode) : mode_(mode) {}

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) {
    mode_ = mode;
    cursor_ = 0;
  }
  std::vector<double> next(std::span<const double> live);

 private:
  Mode mode_;
  std::vector<std::vector<double>> values_;
  std::size_t cursor_ = 0;
};

/// Installs a tape on the current thread for the guard's lifetime.
class StopGradientTapeGuard {
 public:
  explicit StopGradientTapeGuard(StopGradientTape& tape);
  ~StopGradientTapeGuard();
  StopGradientTapeGuard(const StopGradientTapeGuard&) = delete;
  StopGradientTapeGuard& operator=(const StopGradientTapeGuard&) = delete;

 private:
  StopGradientTape* previous_;
};

}  // namespace svid
