#include "svid/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <sstream>
#include <unordered_set>

namespace svid {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "max rel error " << max_rel_error << " over " << coordinates_checked << " coordinates";
  if (leaves_skipped_detached) os << " (" << leaves_skipped_detached << " detached leaves skipped)";
  if (coordinates_skipped_kink) os << " (" << coordinates_skipped_kink << " coordinates at kinks skipped)";
  if (coordinates_checked)
    os << "; worst at leaf " << worst.leaf << "[" << worst.index << "]: analytic " << worst_analytic << " vs numeric "
       << worst_numeric;
  return os.str();
}

LeafReachability classify_leaves(const Tensor& root) {
  // Walk twice: once over differentiable edges only, once over every edge.
  auto walk = [&](bool follow_detached) {
    std::unordered_set<const TensorImpl*> leaves;
    std::unordered_set<const TensorImpl*> seen;
    std::vector<const TensorImpl*> stack{root.impl().get()};
    while (!stack.empty()) {
      const TensorImpl* t = stack.back();
      stack.pop_back();
      if (!seen.insert(t).second) continue;
      if (t->grad_fn) {
        for (const auto& in : t->grad_fn->inputs) stack.push_back(in.get());
      } else if (t->requires_grad) {
        leaves.insert(t);
      }
      if (follow_detached && t->detached_from) stack.push_back(t->detached_from.get());
    }
    return leaves;
  };
  const auto live = walk(false);
  const auto all = walk(true);
  LeafReachability out;
  out.differentiable.assign(live.begin(), live.end());
  for (const auto* t : all)
    if (!live.contains(t)) out.detached_only.push_back(t);
  return out;
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double eps,
                                  std::optional<std::vector<GradCoordinate>> coordinates,
                                  std::optional<double> kink_tolerance, double rounding_ulps) {
  GradCheckReport report;
  StopGradientTape tape(StopGradientTape::Mode::record);
  StopGradientTapeGuard guard(tape);

  for (auto& leaf : leaves) leaf.zero_grad();
  std::vector<bool> skip(leaves.size(), false);
  {
    Tensor loss = f();
    const auto reach = classify_leaves(loss);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const auto* p = leaves[i].impl().get();
      const bool live = std::find(reach.differentiable.begin(), reach.differentiable.end(), p) !=
                        reach.differentiable.end();
      const bool detached =
          std::find(reach.detached_only.begin(), reach.detached_only.end(), p) != reach.detached_only.end();
      if (!live && detached) {
        skip[i] = true;
        ++report.leaves_skipped_detached;
      }
    }
    backward(loss);
  }

  std::vector<GradCoordinate> coords;
  if (coordinates) {
    coords = std::move(*coordinates);
  } else {
    for (std::size_t i = 0; i < leaves.size(); ++i)
      for (std::size_t k = 0; k < leaves[i].size(); ++k) coords.push_back({i, k});
  }

  tape.set_mode(StopGradientTape::Mode::replay);
  auto evaluate = [&] {
    tape.set_mode(StopGradientTape::Mode::replay);
    NoGradGuard no_grad;
    return f().item();
  };

  for (const auto& c : coords) {
    if (skip.at(c.leaf)) continue;
    auto values = leaves[c.leaf].mutable_data();
    const double saved = values[c.index];
    // Difference quotient and the part of it that rounding in f can account for.
    auto central = [&](double h) {
      values[c.index] = saved + h;
      const double up = evaluate();
      values[c.index] = saved - h;
      const double down = evaluate();
      values[c.index] = saved;
      const double floor = rounding_ulps * std::numeric_limits<double>::epsilon() *
                           std::max(std::abs(up), std::abs(down)) / h;
      return std::pair{(up - down) / (2.0 * h), floor};
    };
    const auto [numeric, floor] = central(eps);
    if (kink_tolerance) {
      const auto [half, half_floor] = central(eps / 2.0);
      const double gap = std::max(0.0, std::abs(numeric - half) - floor - half_floor);
      if (gap > *kink_tolerance * (std::abs(numeric) + std::abs(half) + 1e-12)) {
        ++report.coordinates_skipped_kink;
        continue;
      }
    }
    const double analytic = leaves[c.leaf].grad()[c.index];
    const double err =
        std::max(0.0, std::abs(analytic - numeric) - floor) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
    ++report.coordinates_checked;
    if (err >= report.max_rel_error) {
      report.max_rel_error = err;
      report.worst = c;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace svid
