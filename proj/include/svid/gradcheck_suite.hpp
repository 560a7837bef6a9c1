#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svid/gradcheck.hpp"

namespace svid {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
  double tolerance = 0.0;
  /// At most 5% of probed coordinates may be dropped as kink crossings.
  bool passed() const {
    return report.passed(tolerance) && report.coordinates_checked > 0 &&
           report.coordinates_skipped_kink * 20 <= report.coordinates_checked + report.coordinates_skipped_kink;
  }
};

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kCompositeTolerance = 1e-4;

/// Every primitive op on randomized small shapes, then full depth-3 U-Net
/// losses (supervised and svid) over sampled parameter coordinates.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed);

}  // namespace svid
