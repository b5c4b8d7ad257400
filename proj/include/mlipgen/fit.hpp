#pragma once

#include <map>
#include <memory>
#include <vector>

#include "mlipgen/surrogate.hpp"
#include "mlipgen/training.hpp"

namespace mlipgen {

struct LossWeights {
  double W_E = 100.0;
  double W_F = 1.0;
  /// Optional per-kind weights used when domains of several kinds are mixed.
  std::map<DefectKind, std::pair<double, double>> per_kind;

  std::pair<double, double> resolve(DefectKind kind) const;
  void validate() const;
};

/// Observations from one training domain with the weights they enter with.
struct TrainingBlock {
  std::shared_ptr<const DefectedLattice> lattice;
  const std::vector<Observation>* observations = nullptr;
  double W_E = 1.0;
  double W_F = 1.0;
};

struct LinearSystem {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd target;
};

/// Per sample: one energy row sum_l [B(g_l(u)) - B(g_l(0))] and 2n force rows
/// -d/du sum_l B(g_l(u)), scaled by sqrt(W_E) and sqrt(W_F). Zero weights keep
/// their rows with zero scale.
LinearSystem assemble(const std::vector<TrainingBlock>& blocks, const Basis& basis);
LinearSystem assemble(const TrainingDomain& domain, const std::vector<Observation>& samples,
                      const Basis& basis, const LossWeights& weights);

struct RrqrSolution {
  Eigen::VectorXd coefficients;
  int rank = 0;
  double residual = 0.0;  // ||A c - y||
};

/// Column-pivoted QR truncated at pivots below rtol times the largest pivot.
RrqrSolution solve_rrqr(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double rtol = 1e-6);

struct FitResult {
  std::shared_ptr<const SurrogatePotential> model;
  int rank = 0;
  double loss = 0.0;  // squared weighted residual
  double rmse_E_train = 0.0, rmse_F_train = 0.0;
  double rmse_E_test = 0.0, rmse_F_test = 0.0;
  double wall_time = 0.0;
};

/// Energy RMSE is per site; force RMSE is per component.
void sample_rmse(const EnergyAssembler& model, const std::vector<Observation>& obs, double& rmse_E,
                 double& rmse_F);

FitResult fit(const std::vector<TrainingBlock>& train, const std::vector<TrainingBlock>& test,
              std::shared_ptr<const Basis> basis, double rtol = 1e-6);
FitResult fit(const TrainingDomain& domain, const std::vector<Observation>& train,
              const std::vector<Observation>& test, std::shared_ptr<const Basis> basis,
              const LossWeights& weights, double rtol = 1e-6);

}  // namespace mlipgen
