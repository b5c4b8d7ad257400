#include "mlipgen/eam.hpp"

#include <cmath>

#include "mlipgen/errors.hpp"

namespace mlipgen {

void EamParams::validate() const {
  if (!(depth > 0) || !(stiffness > 0) || !(eq_length > 0) || !(density_decay > 0))
    throw Error(ErrorKind::InvalidArgument, "EAM depth, stiffness, eq_length and density_decay must be positive");
  if (!(taper_width_factor > 0) || !(cutoff_factor > taper_width_factor))
    throw Error(ErrorKind::InvalidArgument, "EAM taper must lie inside the cutoff");
}

void Taper::eval(double r, double& t, double& dt, double& d2t) const {
  const double s = (r - (rc - w)) / w;
  if (s <= 0) {
    t = 1.0;
    dt = d2t = 0.0;
  } else if (s >= 1) {
    t = dt = d2t = 0.0;
  } else {
    const double s2 = s * s;
    t = 1.0 - s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
    dt = -30.0 * s2 * (1.0 - s) * (1.0 - s) / w;
    d2t = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (w * w);
  }
}

EamToyPotential::EamToyPotential(const EamParams& params) : p_(params) {
  p_.validate();
  taper_ = Taper{p_.cutoff(), p_.taper_width()};
}

void EamToyPotential::pair(double r, double& v, double& dv, double& d2v) const {
  double t, dt, d2t;
  taper_.eval(r, t, dt, d2t);
  if (t == 0.0 && dt == 0.0 && d2t == 0.0) {
    v = dv = d2v = 0.0;
    return;
  }
  const double a = p_.stiffness;
  const double e1 = std::exp(-a * (r - p_.eq_length));
  const double e2 = e1 * e1;
  const double m = p_.depth * (e2 - 2.0 * e1);
  const double dm = p_.depth * (-2.0 * a * e2 + 2.0 * a * e1);
  const double d2m = p_.depth * (4.0 * a * a * e2 - 2.0 * a * a * e1);
  v = m * t;
  dv = dm * t + m * dt;
  d2v = d2m * t + 2.0 * dm * dt + m * d2t;
}

void EamToyPotential::density(double r, double& v, double& dv, double& d2v) const {
  double t, dt, d2t;
  taper_.eval(r, t, dt, d2t);
  const double l = p_.density_decay;
  const double e = std::exp(-l * r);
  v = e * t;
  dv = -l * e * t + e * dt;
  d2v = l * l * e * t - 2.0 * l * e * dt + e * d2t;
}

void EamToyPotential::embed(double t, double& f, double& df, double& d2f) const {
  if (t <= 0.0) {
    f = df = d2f = 0.0;
    return;
  }
  const double s = std::sqrt(t);
  f = p_.c1 * s + p_.c2 * t * t;
  df = 0.5 * p_.c1 / s + 2.0 * p_.c2 * t;
  d2f = -0.25 * p_.c1 / (s * t) + 2.0 * p_.c2;
}

double EamToyPotential::energy(std::span<const Vec2> env) const {
  double pair_sum = 0.0;
  double rho = 0.0;
  for (const auto& g : env) {
    const double r = g.norm();
    if (r == 0.0) throw Error(ErrorKind::NeighborAtZeroDistance, "neighbour at zero distance");
    double v, dv, d2v;
    pair(r, v, dv, d2v);
    pair_sum += v;
    density(r, v, dv, d2v);
    rho += v;
  }
  double f, df, d2f;
  embed(rho, f, df, d2f);
  return 0.5 * pair_sum + f;
}

double EamToyPotential::energy_gradient(std::span<const Vec2> env, std::span<Vec2> grad) const {
  const std::size_t n = env.size();
  std::vector<double> r(n), dphi(n), dpsi(n);
  double pair_sum = 0.0;
  double rho = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    r[j] = env[j].norm();
    if (r[j] == 0.0) throw Error(ErrorKind::NeighborAtZeroDistance, "neighbour at zero distance");
    double v, d2v;
    pair(r[j], v, dphi[j], d2v);
    pair_sum += v;
    density(r[j], v, dpsi[j], d2v);
    rho += v;
  }
  double f, df, d2f;
  embed(rho, f, df, d2f);
  for (std::size_t j = 0; j < n; ++j)
    grad[j] = (0.5 * dphi[j] + df * dpsi[j]) / r[j] * env[j];
  return 0.5 * pair_sum + f;
}

void EamToyPotential::hessian(std::span<const Vec2> env, Eigen::Ref<Eigen::MatrixXd> h) const {
  const std::size_t n = env.size();
  std::vector<double> r(n), d1(n), d2(n), p1(n), p2(n);
  std::vector<Vec2> unit(n);
  double rho = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    r[j] = env[j].norm();
    if (r[j] == 0.0) throw Error(ErrorKind::NeighborAtZeroDistance, "neighbour at zero distance");
    unit[j] = env[j] / r[j];
    double v;
    pair(r[j], v, d1[j], d2[j]);
    double rv;
    density(r[j], rv, p1[j], p2[j]);
    rho += rv;
  }
  double f, df, d2f;
  embed(rho, f, df, d2f);
  h.setZero();
  for (std::size_t j = 0; j < n; ++j) {
    const Mat2 gg = unit[j] * unit[j].transpose();
    const double radial = 0.5 * d2[j] + df * p2[j];
    const double tangential = (0.5 * d1[j] + df * p1[j]) / r[j];
    h.block<2, 2>(2 * j, 2 * j) = radial * gg + tangential * (Mat2::Identity() - gg);
    for (std::size_t k = 0; k < n; ++k) {
      h.block<2, 2>(2 * j, 2 * k) += d2f * p1[j] * p1[k] * unit[j] * unit[k].transpose();
    }
  }
}

}  // namespace mlipgen
