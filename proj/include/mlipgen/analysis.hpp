#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mlipgen/rates.hpp"
#include "mlipgen/setup.hpp"

namespace mlipgen {

/// ||D(u_ref - u_sur)|| over the whole cell.
double geometry_error(const DefectedLattice& lattice, const Displacement& u_ref,
                      const Displacement& u_sur);

/// |E_ref(u_ref) - E_sur(u_sur)|, each functional at its own equilibrium.
double energy_error(const EnergyAssembler& reference, const EnergyAssembler& surrogate,
                    const Displacement& u_ref, const Displacement& u_sur);

struct StudyRow {
  std::string series;
  int L = 0;
  int n_D = 0;
  std::string defect_kinds;
  int basis_size = 0;
  double rmse_E = 0.0, rmse_F = 0.0;
  double eps_E = 0.0, eps_F = 0.0, eps_FC = 0.0, eps_FC_hom = 0.0;
  double geometry_error = 0.0, energy_error = 0.0;
  double wall_time = 0.0;
  std::string status = "ok";
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::string rates_json;
};

using StudyProgress = std::function<void(const StudyRow&)>;

/// Runs every configured series: train on the L-domain, fit, equilibrate both
/// models on the simulation cell from the predictor, and record the errors.
/// Failures of a grid point are recorded in its status column.
StudyResult convergence_study(const RunConfig& run, const StudyProgress& progress = {});

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows, bool record_wall_time);

/// Rate fits per series as a JSON document.
std::string rate_summary(const RunConfig& run, const std::vector<StudyRow>& rows);

}  // namespace mlipgen
