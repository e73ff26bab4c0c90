#pragma once

#include <vector>

#include "pbsae/design.hpp"
#include "pbsae/estimands.hpp"

namespace pbsae {

struct DirectEstimate {
  int area = 0;
  Method method = Method::hajek;
  double point = 0.0;  // NaN when the area has no sampled units
  double se = 0.0;     // NaN when inestimable
  double lo90 = 0.0;
  double hi90 = 0.0;
  bool point_missing = false;
  bool interval_missing = false;
};

// Normal quantile for two-sided 90% intervals.
inline constexpr double kZ90 = 1.6448536269514722;

// Weighted ratio mean per area with a with-replacement PSU linearization
// variance within strata. Binary estimates of exactly 0 or 1 keep the point
// but report no interval.
std::vector<DirectEstimate> hajek_by_area(const DrawnSample& sample, bool binary = false);

// GREG with working model y = beta0_i + x' beta + e fitted by survey-weighted
// least squares on raw design weights. Throws InvalidArgument for a collinear
// working design.
std::vector<DirectEstimate> greg_by_area(const DrawnSample& sample, const AreaFrame& frame);

AreaEstimateTable to_table(const std::vector<DirectEstimate>& estimates);

}  // namespace pbsae
