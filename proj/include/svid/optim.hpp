#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "svid/tensor.hpp"

namespace svid {

/// Loss or gradient went non-finite.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// lr_peak until decay_start, then linear to zero at total_steps.
double lr_schedule(std::uint64_t t, std::uint64_t total_steps, double lr_peak, std::uint64_t decay_start);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam on the accumulated grads of `params`. Throws
/// NumericalError (leaving params and state untouched) on a non-finite grad.
void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr, const AdamConfig& config = {});

double grad_norm(const std::vector<Tensor>& params);

}  // namespace svid
