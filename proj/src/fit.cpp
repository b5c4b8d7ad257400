#include "mlipgen/fit.hpp"

#include <chrono>
#include <cmath>

#include "mlipgen/errors.hpp"
#include "mlipgen/kernels.hpp"

namespace mlipgen {

std::pair<double, double> LossWeights::resolve(DefectKind kind) const {
  auto it = per_kind.find(kind);
  return it == per_kind.end() ? std::make_pair(W_E, W_F) : it->second;
}

void LossWeights::validate() const {
  auto check = [](double e, double f) {
    if (!(e >= 0) || !(f >= 0) || !(e + f > 0))
      throw Error(ErrorKind::InvalidArgument, "loss weights must be nonnegative with positive sum");
  };
  check(W_E, W_F);
  for (const auto& [k, w] : per_kind) check(w.first, w.second);
}

namespace {

// Energy row and force rows of one configuration, written into `rows`
// (first row energy, then 2n force rows), unscaled.
void design_block(const DefectedLattice& lat, const Basis& basis, const Displacement& u,
                  const Eigen::VectorXd& reference_row, Eigen::Ref<Eigen::MatrixXd> rows) {
  const int nb = basis.size();
  rows.setZero();
  std::vector<Vec2> env;
  std::vector<int> slots;
  Eigen::VectorXd row(nb);
  Eigen::MatrixXd grad;
  const double rc = basis.spec().cutoff;
  for (int i = 0; i < lat.size(); ++i) {
    kernels::gather_environment(lat, u, i, rc, env, slots);
    basis.design_row(env, std::span<double>(row.data(), static_cast<std::size_t>(nb)));
    rows.row(0) += row.transpose();
    grad.resize(2 * static_cast<Eigen::Index>(env.size()), nb);
    basis.design_gradient(env, grad);
    const auto list = lat.interactions(i);
    for (std::size_t k = 0; k < env.size(); ++k) {
      const int j = list[static_cast<std::size_t>(slots[k])].index;
      // force = -dE/du; g_k = y_j - y_i
      rows.row(1 + 2 * j) -= grad.row(2 * static_cast<Eigen::Index>(k));
      rows.row(2 + 2 * j) -= grad.row(2 * static_cast<Eigen::Index>(k) + 1);
      rows.row(1 + 2 * i) += grad.row(2 * static_cast<Eigen::Index>(k));
      rows.row(2 + 2 * i) += grad.row(2 * static_cast<Eigen::Index>(k) + 1);
    }
  }
  rows.row(0) -= reference_row.transpose();
}

Eigen::VectorXd reference_row(const DefectedLattice& lat, const Basis& basis) {
  const int nb = basis.size();
  Eigen::VectorXd total = Eigen::VectorXd::Zero(nb);
  Eigen::VectorXd row(nb);
  std::vector<Vec2> env;
  std::vector<int> slots;
  const Displacement zero = Displacement::Zero(2, lat.size());
  for (int i = 0; i < lat.size(); ++i) {
    kernels::gather_environment(lat, zero, i, basis.spec().cutoff, env, slots);
    basis.design_row(env, std::span<double>(row.data(), static_cast<std::size_t>(nb)));
    total += row;
  }
  return total;
}

}  // namespace

LinearSystem assemble(const std::vector<TrainingBlock>& blocks, const Basis& basis) {
  Eigen::Index rows = 0;
  for (const auto& b : blocks) {
    if (!b.lattice || !b.observations) throw Error(ErrorKind::InvalidArgument, "incomplete training block");
    if (b.observations->empty()) throw Error(ErrorKind::InvalidArgument, "training block has no samples");
    if (!(b.W_E >= 0) || !(b.W_F >= 0)) throw Error(ErrorKind::InvalidArgument, "negative loss weight");
    for (const auto& o : *b.observations)
      if (o.u.cols() != b.lattice->size() || o.forces.cols() != b.lattice->size())
        throw Error(ErrorKind::DimensionMismatch, "observation does not match its lattice");
    rows += static_cast<Eigen::Index>(b.observations->size()) * (1 + 2 * b.lattice->size());
  }
  LinearSystem sys;
  sys.matrix.setZero(rows, basis.size());
  sys.target.setZero(rows);
  Eigen::Index offset = 0;
  for (const auto& b : blocks) {
    const DefectedLattice& lat = *b.lattice;
    const Eigen::Index per = 1 + 2 * static_cast<Eigen::Index>(lat.size());
    const Eigen::VectorXd ref = reference_row(lat, basis);
    const double se = std::sqrt(b.W_E);
    const double sf = std::sqrt(b.W_F);
    const auto& obs = *b.observations;
    const int count = static_cast<int>(obs.size());
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < count; ++s) {
      const Eigen::Index r0 = offset + s * per;
      auto block = sys.matrix.middleRows(r0, per);
      design_block(lat, basis, obs[static_cast<std::size_t>(s)].u, ref, block);
      block.row(0) *= se;
      block.bottomRows(per - 1) *= sf;
      sys.target[r0] = se * obs[static_cast<std::size_t>(s)].energy;
      sys.target.segment(r0 + 1, per - 1) =
          sf * Eigen::Map<const Eigen::VectorXd>(obs[static_cast<std::size_t>(s)].forces.data(), per - 1);
    }
    offset += static_cast<Eigen::Index>(count) * per;
  }
  return sys;
}

LinearSystem assemble(const TrainingDomain& domain, const std::vector<Observation>& samples,
                      const Basis& basis, const LossWeights& weights) {
  weights.validate();
  const auto [we, wf] = weights.resolve(domain.kind);
  return assemble({TrainingBlock{domain.lattice, &samples, we, wf}}, basis);
}

RrqrSolution solve_rrqr(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double rtol) {
  if (a.rows() < 1 || a.cols() < 1) throw Error(ErrorKind::DimensionMismatch, "empty least-squares system");
  if (a.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "target length does not match rows");
  if (!(rtol > 0 && rtol < 1)) throw Error(ErrorKind::InvalidArgument, "rtol must lie in (0, 1)");
  const Eigen::Index n = a.cols();

  // Compress tall systems to the triangular factor of [A y] first; column
  // pivoting then acts on an (n+1)-row problem with the same column norms.
  Eigen::MatrixXd r;
  Eigen::VectorXd qty;
  if (a.rows() > 2 * (n + 1)) {
    Eigen::MatrixXd ay(a.rows(), n + 1);
    ay << a, y;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ay);
    const Eigen::MatrixXd full = qr.matrixQR().topRows(n + 1).triangularView<Eigen::Upper>();
    r = full.leftCols(n);
    qty = full.col(n);
  } else {
    r = a;
    qty = y;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> cp(r);
  cp.setThreshold(rtol);
  RrqrSolution sol;
  sol.rank = static_cast<int>(cp.rank());
  if (sol.rank == 0) throw Error(ErrorKind::AllColumnsTruncated, "every pivot fell below the threshold");
  sol.coefficients = cp.solve(qty);
  sol.residual = (a * sol.coefficients - y).norm();
  return sol;
}

void sample_rmse(const EnergyAssembler& model, const std::vector<Observation>& obs, double& rmse_E,
                 double& rmse_F) {
  double se = 0.0, sf = 0.0;
  long nf = 0;
  const double n = model.lattice().size();
  for (const auto& o : obs) {
    SiteVectors f;
    const double e = model.energy_and_forces(o.u, f);
    se += std::pow((e - o.energy) / n, 2);
    sf += (f - o.forces).squaredNorm();
    nf += f.size();
  }
  rmse_E = obs.empty() ? 0.0 : std::sqrt(se / static_cast<double>(obs.size()));
  rmse_F = nf == 0 ? 0.0 : std::sqrt(sf / static_cast<double>(nf));
}

namespace {

void block_rmse(const std::vector<TrainingBlock>& blocks,
                const std::shared_ptr<const SurrogatePotential>& model, double& rmse_E,
                double& rmse_F) {
  double se = 0.0, sf = 0.0;
  long ne = 0, nf = 0;
  for (const auto& b : blocks) {
    EnergyAssembler a(b.lattice, model);
    double e, f;
    sample_rmse(a, *b.observations, e, f);
    const long count = static_cast<long>(b.observations->size());
    se += e * e * count;
    ne += count;
    sf += f * f * count * 2 * b.lattice->size();
    nf += count * 2 * b.lattice->size();
  }
  rmse_E = ne ? std::sqrt(se / ne) : 0.0;
  rmse_F = nf ? std::sqrt(sf / nf) : 0.0;
}

}  // namespace

FitResult fit(const std::vector<TrainingBlock>& train, const std::vector<TrainingBlock>& test,
              std::shared_ptr<const Basis> basis, double rtol) {
  const auto start = std::chrono::steady_clock::now();
  const LinearSystem sys = assemble(train, *basis);
  const RrqrSolution sol = solve_rrqr(sys.matrix, sys.target, rtol);
  FitResult res;
  res.model = std::make_shared<const SurrogatePotential>(basis, sol.coefficients);
  res.rank = sol.rank;
  res.loss = sol.residual * sol.residual;
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  block_rmse(train, res.model, res.rmse_E_train, res.rmse_F_train);
  if (!test.empty()) block_rmse(test, res.model, res.rmse_E_test, res.rmse_F_test);
  return res;
}

FitResult fit(const TrainingDomain& domain, const std::vector<Observation>& train,
              const std::vector<Observation>& test, std::shared_ptr<const Basis> basis,
              const LossWeights& weights, double rtol) {
  weights.validate();
  const auto [we, wf] = weights.resolve(domain.kind);
  std::vector<TrainingBlock> tr{TrainingBlock{domain.lattice, &train, we, wf}};
  std::vector<TrainingBlock> te;
  if (!test.empty()) te.push_back(TrainingBlock{domain.lattice, &test, we, wf});
  return fit(tr, te, std::move(basis), rtol);
}

}  // namespace mlipgen
