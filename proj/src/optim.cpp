#include "svid/optim.hpp"

#include <cmath>

namespace svid {

double lr_schedule(std::uint64_t t, std::uint64_t total_steps, double lr_peak, std::uint64_t decay_start) {
  if (decay_start == 0 || decay_start > total_steps)
    throw std::invalid_argument("decay_start must lie in (0, total_steps]");
  if (t > total_steps)
    throw std::out_of_range("step " + std::to_string(t) + " is past total_steps " + std::to_string(total_steps));
  if (t < decay_start) return lr_peak;
  if (total_steps == decay_start) return 0.0;
  return lr_peak * static_cast<double>(total_steps - t) / static_cast<double>(total_steps - decay_start);
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr, const AdamConfig& c) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = params[i].grad();
    for (std::size_t j = 0; j < g.size(); ++j)
      if (!std::isfinite(g[j]))
        throw NumericalError("non-finite gradient in parameter " + std::to_string(i) + " at element " +
                             std::to_string(j) + " (step " + std::to_string(state.step + 1) + ")");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam state does not match parameter list");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size() || g.size() != w.size())
      throw std::invalid_argument("adam: parameter " + std::to_string(i) + " has mismatched grad or moments");
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
    }
  }
}

double grad_norm(const std::vector<Tensor>& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) s += g * g;
  return std::sqrt(s);
}

}  // namespace svid
