#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mlipgen/config.hpp"
#include "mlipgen/eam.hpp"
#include "mlipgen/equilibrate.hpp"
#include "mlipgen/fit.hpp"
#include "mlipgen/surrogate.hpp"

namespace mlipgen {

inline constexpr const char* kVersion = "1.0.0";

struct TrainingSpec {
  int L = 8;
  DefectKind kind = DefectKind::Vacancy;
  int n_train = 200;
  int n_test = 50;
  double delta = 0.01;
  std::uint64_t seed = 1;
  std::uint64_t seed_test = 2;
};

/// A multi-defect simulation cell: N x N primitive cells with n_D defects a
/// distance `separation` apart. Arrangements are "vacancy" and
/// "interstitial-vacancy".
struct SimulationSpec {
  int N = 60;
  std::string arrangement = "vacancy";
  int n_D = 2;
  int separation = 8;
};

/// One basis of a study family.
struct BasisChoice {
  int order = 2;
  int radial_size = 6;
  int max_m = 3;
  int max_degree = 12;
};

struct StudySpec {
  int N = 60;
  int core_N = 60;
  std::vector<std::string> series{"rmse", "L", "nD"};
  std::string arrangement = "vacancy";

  int rmse_L = 8;
  int rmse_nD = 2;
  std::vector<BasisChoice> rmse_bases;

  std::vector<int> L_values{4, 5, 6, 7, 8};
  int L_nD = 2;

  int nD_L = 8;
  std::vector<int> nD_values{2, 3, 4};

  bool record_wall_time = false;
};

struct RunConfig {
  Config source;
  EamParams eam;
  bool r0_auto = true;
  double r0 = 1.0;
  LatticeOptions lattice;
  AssemblerOptions assembler;
  MinimizerConfig minimizer;
  BasisSpec basis;  // cutoff and r0 are filled from the potential
  double inner_radius_factor = 0.6;
  TrainingSpec training;
  LossWeights weights;        // single-kind training
  LossWeights mixed_weights;  // per-kind weights for interstitial-vacancy training
  double rtol = 1e-6;
  SimulationSpec simulation;
  StudySpec study;
  std::string output_dir = ".";
};

/// Reads and validates every section; unknown keys throw ConfigParse.
/// Calibrates r0 when lattice.r0 is absent or "auto".
RunConfig load_run_config(const Config& config);

std::shared_ptr<const EamToyPotential> make_reference(const RunConfig& run);

/// Basis spec of the config with a study choice applied.
BasisSpec basis_spec(const RunConfig& run, const BasisChoice& choice);
BasisChoice base_choice(const RunConfig& run);

DefectSet arrangement_defects(const BravaisSpec& bravais, const std::string& arrangement, int n_D,
                              int separation);
std::vector<DefectKind> arrangement_kinds(const std::string& arrangement);

std::shared_ptr<const DefectedLattice> make_simulation_lattice(const RunConfig& run,
                                                               const SimulationSpec& sim);

/// {"config_hash", "seed", "version"} as a JSON object string.
std::string metadata_json(const RunConfig& run, std::uint64_t seed);

}  // namespace mlipgen
