#pragma once

#include <Eigen/Sparse>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mlipgen/lattice.hpp"

namespace mlipgen {

/// A site energy V(g) of the relative neighbour vectors g_j = y_j - y_l.
///
/// Implementations see only neighbours with |g_j| < cutoff(); the assembler
/// filters on deformed distances. All evaluators must be reentrant.
class SitePotential {
 public:
  virtual ~SitePotential() = default;

  virtual double cutoff() const = 0;
  virtual double energy(std::span<const Vec2> env) const = 0;
  /// Returns V(g) and writes dV/dg_j into grad[j].
  virtual double energy_gradient(std::span<const Vec2> env, std::span<Vec2> grad) const = 0;
  /// Second derivatives, 2J x 2J, coordinates ordered (g_0x, g_0y, g_1x, ...).
  virtual void hessian(std::span<const Vec2> env, Eigen::Ref<Eigen::MatrixXd> h) const = 0;
};

struct AssemblerOptions {
  /// Non-collision parameter of the admissible set.
  double admissibility = 0.5;
  /// Pairs inspected by the admissibility check, in units of r0.
  double admissibility_radius = 3.0;
};

/// Energy-difference functional E(u) = sum_l V_l(Du(l)) - V_l(0) on a
/// periodic lattice, with forces and a sparse Hessian.
class EnergyAssembler {
 public:
  EnergyAssembler(std::shared_ptr<const DefectedLattice> lattice,
                  std::shared_ptr<const SitePotential> potential, AssemblerOptions options = {});

  const DefectedLattice& lattice() const { return *lattice_; }
  const std::shared_ptr<const DefectedLattice>& lattice_ptr() const { return lattice_; }
  const SitePotential& potential() const { return *potential_; }
  const std::shared_ptr<const SitePotential>& potential_ptr() const { return potential_; }
  const AssemblerOptions& options() const { return options_; }

  /// Site energies of the undeformed reference configuration.
  const std::vector<double>& reference_site_energies() const { return reference_; }

  double energy(const Displacement& u) const;
  double energy_and_forces(const Displacement& u, SiteVectors& forces) const;
  SiteVectors forces(const Displacement& u) const;
  Eigen::SparseMatrix<double> hessian(const Displacement& u) const;
  /// Per-site energy differences V_l(Du(l)) - V_l(0).
  std::vector<double> site_energies(const Displacement& u) const;

  /// Throws InadmissibleConfiguration when u collides atoms or exceeds the
  /// neighbour-list skin.
  void require_admissible(const Displacement& u) const;

 private:
  std::shared_ptr<const DefectedLattice> lattice_;
  std::shared_ptr<const SitePotential> potential_;
  AssemblerOptions options_;
  std::vector<double> reference_;
};

double total_energy(const EnergyAssembler& assembler, const Displacement& u);
SiteVectors forces(const EnergyAssembler& assembler, const Displacement& u);
Eigen::SparseMatrix<double> hessian(const EnergyAssembler& assembler, const Displacement& u);

/// Dense copy of a sparse Hessian (small systems only).
Eigen::MatrixXd to_dense(const Eigen::SparseMatrix<double>& h);

/// Nearest-neighbour spacing of the triangular lattice that minimises the
/// energy per atom over uniform scaling, searched in [lo, hi].
double calibrate_r0(const SitePotential& potential, double lo, double hi);

struct DerivativeCheck {
  double force_error = 0.0;    // max |F - F_fd| / max |F_fd|
  double hessian_error = 0.0;  // max |H - H_fd| / max |H_fd|
};

/// Compares forces with central differences of the energy and the Hessian
/// with central differences of the forces at `configs` random displacements
/// of amplitude `amplitude` r0.
DerivativeCheck check_derivatives(const EnergyAssembler& assembler, int configs, double amplitude,
                                  std::uint64_t seed, double step = 1e-5);

/// Energy per atom of the homogeneous triangular lattice with spacing s.
double triangular_energy_per_atom(const SitePotential& potential, double s);

}  // namespace mlipgen
