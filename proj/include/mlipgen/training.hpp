#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mlipgen/equilibrate.hpp"
#include "mlipgen/potential.hpp"
#include "mlipgen/surrogate.hpp"

namespace mlipgen {

/// Periodic L x L cell with one defect near the origin, at its reference equilibrium.
struct TrainingDomain {
  int L = 0;  // side in units of the primitive cell
  DefectKind kind = DefectKind::Vacancy;
  std::shared_ptr<const DefectedLattice> lattice;
  Displacement u_bar;
  double energy = 0.0;
  double c_bar = 0.0;
};

/// Reference position of a single defect attached to lattice point (i, j).
Vec2 defect_position(const BravaisSpec& bravais, DefectKind kind, int i, int j);

TrainingDomain make_training_domain(int L, DefectKind kind,
                                    std::shared_ptr<const SitePotential> reference, double r0,
                                    const MinimizerConfig& minimizer = {},
                                    const LatticeOptions& lattice_options = {},
                                    const AssemblerOptions& assembler_options = {});

struct Observation {
  Displacement u;
  double energy = 0.0;
  SiteVectors forces;
  bool test = false;
};

/// n configurations u_bar + noise with i.i.d. N(0, (delta r0)^2) coordinates,
/// labelled by the reference energy and forces.
std::vector<Observation> sample_configs(const TrainingDomain& domain,
                                        const EnergyAssembler& reference, int n, double delta,
                                        std::uint64_t seed, bool test = false);

struct MatchingReport {
  double eps_E = 0.0;
  double eps_F = 0.0;
  double eps_FC = 0.0;
  double eps_FC_hom = 0.0;
  double eps_FC_hom_rel = 0.0;  // eps_FC_hom over the norm of the reference Hessian
  double rmse_E = 0.0;          // per site
  double rmse_F = 0.0;          // per component
};

/// sup over v of |<(H1 - H2) v, v>| / ||Dv||^2, the operator norm of a force
/// constant difference from the energy seminorm to its dual.
double force_constant_error(const DefectedLattice& lattice, const Eigen::SparseMatrix<double>& dh);

MatchingReport matching_report(const TrainingDomain& domain, const EnergyAssembler& reference,
                               const std::vector<Observation>& samples,
                               std::shared_ptr<const SitePotential> model,
                               const LatticeOptions& lattice_options = {},
                               const AssemblerOptions& assembler_options = {});

/// JSON-lines training set: a header record, then one record per
/// observation; configurations go to a CSV next to it.
void write_training_set(const std::string& jsonl_path, const std::string& csv_path,
                        const TrainingDomain& domain, const std::vector<Observation>& obs,
                        const std::string& metadata_json);
std::vector<Observation> read_training_set(const std::string& jsonl_path, int sites);

}  // namespace mlipgen
