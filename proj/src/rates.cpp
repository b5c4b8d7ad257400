#include "mlipgen/rates.hpp"

#include <cmath>

#include "mlipgen/errors.hpp"

namespace mlipgen {

RateFit fit_rate(const std::vector<std::pair<double, double>>& points, double lo, double hi) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [x, y] : points) {
    if (x < lo || x > hi) continue;
    if (!(x > 0) || !(y > 0))
      throw Error(ErrorKind::NonpositiveValue, "rate fit needs positive x and y");
    xs.push_back(std::log(x));
    ys.push_back(std::log(y));
  }
  const int n = static_cast<int>(xs.size());
  if (n < 3) throw Error(ErrorKind::TooFewPoints, "rate fit needs at least three points");
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += xs[static_cast<std::size_t>(i)];
    my += ys[static_cast<std::size_t>(i)];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = xs[static_cast<std::size_t>(i)] - mx;
    const double dy = ys[static_cast<std::size_t>(i)] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw Error(ErrorKind::TooFewPoints, "rate fit needs distinct abscissae");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.points = n;
  return fit;
}

}  // namespace mlipgen
