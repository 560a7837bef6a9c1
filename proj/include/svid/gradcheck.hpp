#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "svid/tensor.hpp"

namespace svid {

/// One coordinate to probe: leaf index into the `leaves` list and element index.
struct GradCoordinate {
  std::size_t leaf = 0;
  std::size_t index = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates_checked = 0;
  /// Leaves that the loss reaches only through stop_gradient. Their analytic
  /// gradient is zero by contract, so they are excluded from the comparison.
  std::size_t leaves_skipped_detached = 0;
  /// Coordinates whose +-eps probe straddles a kink (see finite_diff_check).
  std::size_t coordinates_skipped_kink = 0;
  GradCoordinate worst{};
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
  std::string summary() const;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. `f` must rebuild its graph from the current leaf values on
/// every call. During the perturbed evaluations every stop_gradient yields the
/// value it produced at the unperturbed point, so detached subexpressions stay
/// constant exactly as they do for the analytic gradient.
///
/// The error per coordinate is |a - c| / (|a| + |c| + 1e-12). With
/// rounding_ulps > 0 the difference |a - c| is first reduced by
/// rounding_ulps * DBL_EPSILON * |f| / eps, the resolution limit of the
/// central difference itself.
///
/// With kink_tolerance set, each coordinate is also differenced at eps/2; if
/// the two estimates disagree by more than that relative amount the probe
/// crossed a non-differentiable point and the coordinate is counted in
/// coordinates_skipped_kink instead of being compared.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double eps,
                                  std::optional<std::vector<GradCoordinate>> coordinates = std::nullopt,
                                  std::optional<double> kink_tolerance = std::nullopt, double rounding_ulps = 0.0);

/// Leaves (requires_grad tensors without grad_fn) reachable from `root`
/// through differentiable edges, and those reachable only via stop_gradient.
struct LeafReachability {
  std::vector<const TensorImpl*> differentiable;
  std::vector<const TensorImpl*> detached_only;
};
LeafReachability classify_leaves(const Tensor& root);

}  // namespace svid
