#pragma once

#include <utility>
#include <vector>

namespace mlipgen {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;  // natural log of the prefactor
  double r_squared = 0.0;
  int points = 0;
};

/// Least-squares line through (log x, log y) for points with x in [lo, hi].
/// Throws TooFewPoints below three points and NonpositiveValue on x, y <= 0.
RateFit fit_rate(const std::vector<std::pair<double, double>>& points, double lo = 0.0,
                 double hi = 1e300);

}  // namespace mlipgen
