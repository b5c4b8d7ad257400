#pragma once

#include <map>
#include <memory>

#include "mlipgen/lattice.hpp"
#include "mlipgen/potential.hpp"
#include "mlipgen/rates.hpp"

namespace mlipgen {

struct MinimizerConfig {
  double g_tol = 1e-8;  // max per-site force norm
  int max_iterations = 20000;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.1;
  /// Largest displacement change of any atom in one line-search trial, units of r0.
  double max_step = 0.1;
  /// Precondition the search direction by the nearest-neighbour Laplacian.
  bool precondition = true;
  double precondition_shift = 1e-3;

  void validate() const;
};

struct EquilibriumResult {
  Displacement u;
  double energy = 0.0;
  double residual_force_norm = 0.0;
  double c_bar = 0.0;  // set by check_stability; NaN until then
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
};

/// Local minimiser of the energy started from u0. Throws NotConverged or
/// LeftAdmissibleSet.
EquilibriumResult equilibrate(const EnergyAssembler& assembler, const Displacement& u0,
                              const MinimizerConfig& config = {});

/// Smallest eigenvalue of a symmetric matrix with the rigid translations of
/// the 2 x n layout projected out.
double smallest_nontranslation_eigenvalue(const Eigen::SparseMatrix<double>& h);

/// Smallest Hessian eigenvalue on the complement of translations.
double check_stability(const EnergyAssembler& assembler, const Displacement& u);

/// Quintic cut-off: 1 for x <= 4/6, 0 for x >= 5/6, C^2 in between.
double truncation_profile(double x);

struct TruncationOperator {
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
};

/// Mean of u over the sites of the annulus 4R/6 <= |l - center| <= 5R/6.
Vec2 annulus_average(const DefectedLattice& lattice, const Displacement& u,
                     const TruncationOperator& op);

/// eta((l - center)/R) (u(l) - a_R), distances under minimum image.
Displacement truncate(const DefectedLattice& lattice, const Displacement& u,
                      const TruncationOperator& op);

/// Equilibrium of a single defect centred at `center` on a large domain.
struct CoreSolution {
  std::shared_ptr<const DefectedLattice> lattice;
  Displacement u;
  Vec2 center = Vec2::Zero();
};

/// Superposition of truncated cores placed at every defect of `target`.
Displacement build_predictor(const DefectedLattice& target,
                             const std::map<DefectKind, CoreSolution>& cores, double radius);

/// Per-distance-shell maxima of the stencil norm around `center` (shell width r0).
std::vector<std::pair<double, double>> shell_maxima(const DefectedLattice& lattice,
                                                    const Displacement& u, const Vec2& center);

/// Log-log slope of the shell maxima over [5 r0, 0.4 domain radius].
RateFit check_decay(const DefectedLattice& lattice, const Displacement& u, const Vec2& center);

}  // namespace mlipgen
