#include "svid/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace svid {

namespace {

thread_local bool t_grad_enabled = true;
thread_local StopGradientTape* t_tape = nullptr;

bool needs_grad(const TensorImpl& t) { return t.requires_grad || t.grad_fn != nullptr; }

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  if (numel(shape) != values.size())
    throw ShapeError("shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->data.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }
std::size_t Tensor::dim(std::size_t axis) const { return impl_->shape.at(axis); }
std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
  if (impl_->grad_fn) throw GraphError(std::string("cannot mutate the output of op '") + impl_->grad_fn->op + "'");
  return impl_->data;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return needs_grad(*impl_); }
bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return impl_->grad; }
void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::detached_copy() const { return from(shape(), impl_->data, false); }

// ---------------------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

std::span<double> Node::input_grad(std::size_t i) {
  auto& in = *inputs[i];
  if (in.grad_fn) {
    auto& g = in.grad_fn->grad;
    if (g.empty()) g.assign(in.grad_fn->output_size, 0.0);
    return g;
  }
  if (in.requires_grad) return in.grad;
  return {};
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   Node::BackwardFn backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  const bool any = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
                     return t.defined() && needs_grad(*t.impl());
                   });
  if (any) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->output_size = impl->data.size();
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward_fn);
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw GraphError("backward on an undefined tensor");
  if (loss.size() != 1) throw GraphError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  auto& root_impl = *loss.impl();
  if (!root_impl.grad_fn) {
    if (!root_impl.requires_grad) throw GraphError("loss does not depend on any tensor that requires grad");
    root_impl.grad[0] += 1.0;
    return;
  }

  // Iterative post-order DFS: inputs precede their consumers in `order`.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = root_impl.grad_fn.get();
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->consumed)
      throw GraphError(std::string("backward through an already consumed graph (op '") + node->op + "')");
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++]->grad_fn.get();
      if (child && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& node = **it;
    if (!node.grad.empty()) node.backward(node);
    node.consumed = true;
    node.backward = nullptr;
    std::vector<double>().swap(node.grad);
  }
}

// ---------------------------------------------------------------------------

std::vector<double> StopGradientTape::next(std::span<const double> live) {
  if (mode_ == Mode::record) {
    values_.emplace_back(live.begin(), live.end());
    return values_.back();
  }
  if (cursor_ >= values_.size()) throw GraphError("stop_gradient replay ran past the recorded values");
  const auto& v = values_[cursor_++];
  if (v.size() != live.size()) throw GraphError("stop_gradient replay size mismatch");
  return v;
}

StopGradientTapeGuard::StopGradientTapeGuard(StopGradientTape& tape) : previous_(t_tape) { t_tape = &tape; }
StopGradientTapeGuard::~StopGradientTapeGuard() { t_tape = previous_; }

Tensor stop_gradient(const Tensor& input) {
  std::vector<double> values = t_tape ? t_tape->next(input.data())
                                      : std::vector<double>(input.data().begin(), input.data().end());
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = input.shape();
  impl->data = std::move(values);
  impl->detached_from = input.impl();
  return Tensor(std::move(impl));
}

}  // namespace svid
