#pragma once

#include "mlipgen/potential.hpp"

namespace mlipgen {

struct EamParams {
  double depth = 1.0;          // Morse well depth D
  double stiffness = 4.0;      // Morse alpha, 1/length
  double eq_length = 1.0;      // Morse r_e
  double c1 = -1.0;            // F(t) = c1 sqrt(t) + c2 t^2
  double c2 = 0.02;
  double density_decay = 2.0;  // psi(r) = exp(-lambda r)
  double cutoff_factor = 2.5;  // r_cut = cutoff_factor * r_e
  double taper_width_factor = 0.5;

  double cutoff() const { return cutoff_factor * eq_length; }
  double taper_width() const { return taper_width_factor * eq_length; }
  void validate() const;
};

/// Quintic smoothstep taper on [rc - w, rc]: value 1 inside, 0 beyond rc,
/// with matching first and second derivatives at both ends.
struct Taper {
  double rc = 1.0;
  double w = 1.0;

  void eval(double r, double& t, double& dt, double& d2t) const;
};

/// Morse pair term plus a square-root embedding of an exponential density,
/// both multiplied by the taper.
class EamToyPotential final : public SitePotential {
 public:
  explicit EamToyPotential(const EamParams& params);

  const EamParams& params() const { return p_; }

  double cutoff() const override { return p_.cutoff(); }
  double energy(std::span<const Vec2> env) const override;
  double energy_gradient(std::span<const Vec2> env, std::span<Vec2> grad) const override;
  void hessian(std::span<const Vec2> env, Eigen::Ref<Eigen::MatrixXd> h) const override;

  /// Tapered pair function and its first two radial derivatives.
  void pair(double r, double& v, double& dv, double& d2v) const;
  /// Tapered density function and its first two radial derivatives.
  void density(double r, double& v, double& dv, double& d2v) const;
  void embed(double t, double& f, double& df, double& d2f) const;

 private:
  EamParams p_;
  Taper taper_;
};

}  // namespace mlipgen
