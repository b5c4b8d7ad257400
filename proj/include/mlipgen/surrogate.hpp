#pragma once

#include <array>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "mlipgen/potential.hpp"

namespace mlipgen {

struct BasisSpec {
  int order = 2;         // maximal correlation order nu
  int max_degree = 12;   // bound on sum of (k + 1 + |m|) over factors
  int radial_size = 6;   // K radial functions, k = 0..K-1
  int max_m = 3;         // angular bound M
  double cutoff = 2.5;
  double r0 = 1.0;             // scale of the radial coordinate transform
  double inner_radius = 0.5;   // where the transformed coordinate reaches +1

  void validate() const;
};

bool operator==(const BasisSpec& a, const BasisSpec& b);

/// One factor (k, m) of a correlation; m may be negative.
struct OneParticleIndex {
  int k = 0;
  int m = 0;
  auto operator<=>(const OneParticleIndex&) const = default;
};

/// Real part of a product of neighbour-summed densities A_{km}.
struct BasisFunction {
  std::vector<OneParticleIndex> factors;  // sorted, sum of m is zero
  int degree() const;
};

/// Ordered list of rotation- and reflection-invariant correlations.
class Basis {
 public:
  explicit Basis(const BasisSpec& spec);

  const BasisSpec& spec() const { return spec_; }
  int size() const { return static_cast<int>(functions_.size()); }
  const std::vector<BasisFunction>& functions() const { return functions_; }

  /// Radial function R_k and its first two derivatives.
  void radial(int k, double r, double& v, double& dv, double& d2v) const;

  /// Basis values B(g); an empty environment gives a zero row.
  void design_row(std::span<const Vec2> env, std::span<double> row) const;
  /// Derivatives of every basis function: row 2j+c holds dB/d(g_j)_c.
  void design_gradient(std::span<const Vec2> env, Eigen::Ref<Eigen::MatrixXd> grad) const;

  double energy(std::span<const Vec2> env, const Eigen::VectorXd& c) const;
  double energy_gradient(std::span<const Vec2> env, const Eigen::VectorXd& c,
                         std::span<Vec2> grad) const;
  void hessian(std::span<const Vec2> env, const Eigen::VectorXd& c,
               Eigen::Ref<Eigen::MatrixXd> h) const;

 private:
  int slot(int k, int m) const { return k * (2 * spec_.max_m + 1) + m + spec_.max_m; }
  int one_particle_count() const { return spec_.radial_size * (2 * spec_.max_m + 1); }

  struct Workspace;
  void one_particle(std::span<const Vec2> env, Workspace& ws, int derivs) const;
  void product_weights(const Workspace& ws, const Eigen::VectorXd& c,
                       std::vector<std::complex<double>>& w1,
                       std::vector<std::complex<double>>* w2) const;

  BasisSpec spec_;
  std::vector<BasisFunction> functions_;
  std::vector<std::array<int, 4>> slots_;  // one-particle slots of each factor
  double u_in_ = 0.0;
  double u_cut_ = 0.0;
};

/// Linear surrogate V(g) = sum_B c_B B(g).
class SurrogatePotential final : public SitePotential {
 public:
  SurrogatePotential(std::shared_ptr<const Basis> basis, Eigen::VectorXd coefficients);

  const Basis& basis() const { return *basis_; }
  const std::shared_ptr<const Basis>& basis_ptr() const { return basis_; }
  const Eigen::VectorXd& coefficients() const { return c_; }

  double cutoff() const override { return basis_->spec().cutoff; }
  double energy(std::span<const Vec2> env) const override;
  double energy_gradient(std::span<const Vec2> env, std::span<Vec2> grad) const override;
  void hessian(std::span<const Vec2> env, Eigen::Ref<Eigen::MatrixXd> h) const override;

 private:
  std::shared_ptr<const Basis> basis_;
  Eigen::VectorXd c_;
};

std::shared_ptr<const Basis> build_basis(const BasisSpec& spec);

/// JSON document with the spec, the ordered coefficients and a format version.
std::string model_to_json(const SurrogatePotential& model);
SurrogatePotential model_from_json(const std::string& text);

}  // namespace mlipgen
