#include "mlipgen/potential.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "mlipgen/errors.hpp"
#include "mlipgen/kernels.hpp"

namespace mlipgen {

EnergyAssembler::EnergyAssembler(std::shared_ptr<const DefectedLattice> lattice,
                                 std::shared_ptr<const SitePotential> potential,
                                 AssemblerOptions options)
    : lattice_(std::move(lattice)), potential_(std::move(potential)), options_(options) {
  if (!lattice_ || !potential_) throw Error(ErrorKind::InvalidArgument, "null lattice or potential");
  if (potential_->cutoff() >= lattice_->interaction_radius())
    throw Error(ErrorKind::InvalidArgument,
                "potential cutoff exceeds the lattice interaction radius");
  reference_.assign(static_cast<std::size_t>(lattice_->size()), 0.0);
  const Displacement zero = Displacement::Zero(2, lattice_->size());
  kernels::site_energies(kernels::Exec::Parallel, *lattice_, *potential_, zero, reference_);
}

void EnergyAssembler::require_admissible(const Displacement& u) const {
  if (u.cols() != lattice_->size())
    throw Error(ErrorKind::DimensionMismatch, "displacement size does not match lattice");
  if (!check_admissible(*lattice_, u, options_.admissibility, options_.admissibility_radius))
    throw Error(ErrorKind::InadmissibleConfiguration, "configuration is not admissible");
  const Vec2 mean = u.rowwise().mean();
  const double drift = (u.colwise() - mean).colwise().norm().maxCoeff();
  const double skin = lattice_->interaction_radius() - potential_->cutoff();
  if (2.0 * drift >= skin)
    throw Error(ErrorKind::InadmissibleConfiguration,
                "displacements exceed the neighbour-list skin; increase interaction_radius");
}

std::vector<double> EnergyAssembler::site_energies(const Displacement& u) const {
  require_admissible(u);
  std::vector<double> e(static_cast<std::size_t>(lattice_->size()));
  kernels::site_energies(kernels::Exec::Parallel, *lattice_, *potential_, u, e);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= reference_[i];
  return e;
}

double EnergyAssembler::energy(const Displacement& u) const {
  const auto e = site_energies(u);
  double total = 0.0;
  for (double v : e) total += v;
  return total;
}

double EnergyAssembler::energy_and_forces(const Displacement& u, SiteVectors& f) const {
  require_admissible(u);
  std::vector<double> e(static_cast<std::size_t>(lattice_->size()));
  kernels::energy_forces(kernels::Exec::Parallel, *lattice_, *potential_, u, e, f);
  double total = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) total += e[i] - reference_[i];
  return total;
}

SiteVectors EnergyAssembler::forces(const Displacement& u) const {
  SiteVectors f;
  energy_and_forces(u, f);
  return f;
}

Eigen::SparseMatrix<double> EnergyAssembler::hessian(const Displacement& u) const {
  require_admissible(u);
  const int n = lattice_->size();
  std::unordered_map<std::uint64_t, Mat2> blocks;
  blocks.reserve(static_cast<std::size_t>(n) * 64);
  std::vector<Vec2> env;
  std::vector<int> slots;
  std::vector<int> atoms;
  Eigen::MatrixXd h;
  auto add = [&](int p, int q, const Mat2& b) {
    const std::uint64_t key = (static_cast<std::uint64_t>(p) << 32) | static_cast<std::uint32_t>(q);
    auto [it, inserted] = blocks.try_emplace(key, b);
    if (!inserted) it->second += b;
  };
  for (int i = 0; i < n; ++i) {
    kernels::gather_environment(*lattice_, u, i, potential_->cutoff(), env, slots);
    const int j_count = static_cast<int>(env.size());
    if (j_count == 0) continue;
    h.setZero(2 * j_count, 2 * j_count);
    potential_->hessian(env, h);
    const auto list = lattice_->interactions(i);
    atoms.resize(env.size());
    for (std::size_t k = 0; k < env.size(); ++k) atoms[k] = list[static_cast<std::size_t>(slots[k])].index;
    // g_k = y_{a_k} - y_i: the centre couples with minus the row/column sums.
    Mat2 centre = Mat2::Zero();
    for (int a = 0; a < j_count; ++a) {
      Mat2 row_sum = Mat2::Zero();
      for (int b = 0; b < j_count; ++b) {
        const Mat2 blk = h.block<2, 2>(2 * a, 2 * b);
        add(atoms[static_cast<std::size_t>(a)], atoms[static_cast<std::size_t>(b)], blk);
        row_sum += blk;
      }
      add(atoms[static_cast<std::size_t>(a)], i, -row_sum);
      add(i, atoms[static_cast<std::size_t>(a)], -row_sum.transpose());
      centre += row_sum;
    }
    add(i, i, centre);
  }
  std::vector<std::pair<std::uint64_t, Mat2>> sorted(blocks.begin(), blocks.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sorted.size() * 4);
  for (const auto& [key, blk] : sorted) {
    const int p = static_cast<int>(key >> 32);
    const int q = static_cast<int>(key & 0xffffffffu);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) trips.emplace_back(2 * p + a, 2 * q + b, blk(a, b));
  }
  Eigen::SparseMatrix<double> out(2 * n, 2 * n);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

double total_energy(const EnergyAssembler& assembler, const Displacement& u) {
  return assembler.energy(u);
}

SiteVectors forces(const EnergyAssembler& assembler, const Displacement& u) {
  return assembler.forces(u);
}

Eigen::SparseMatrix<double> hessian(const EnergyAssembler& assembler, const Displacement& u) {
  return assembler.hessian(u);
}

Eigen::MatrixXd to_dense(const Eigen::SparseMatrix<double>& h) { return Eigen::MatrixXd(h); }

DerivativeCheck check_derivatives(const EnergyAssembler& assembler, int configs, double amplitude,
                                  std::uint64_t seed, double step) {
  const DefectedLattice& lat = assembler.lattice();
  const int n = lat.size();
  const double h = step * lat.r0();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  DerivativeCheck out;
  for (int c = 0; c < configs; ++c) {
    Displacement u(2, n);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = amplitude * lat.r0() * uni(rng);
    const SiteVectors f = assembler.forces(u);
    const Eigen::MatrixXd hess = to_dense(assembler.hessian(u));
    SiteVectors f_fd(2, n);
    Eigen::MatrixXd h_fd(2 * n, 2 * n);
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      Displacement up = u, um = u;
      up.data()[k] += h;
      um.data()[k] -= h;
      f_fd.data()[k] = -(assembler.energy(up) - assembler.energy(um)) / (2.0 * h);
      const SiteVectors fp = assembler.forces(up);
      const SiteVectors fm = assembler.forces(um);
      h_fd.col(k) = -Eigen::Map<const Eigen::VectorXd>(SiteVectors(fp - fm).data(), 2 * n) / (2.0 * h);
    }
    out.force_error = std::max(out.force_error, (f - f_fd).cwiseAbs().maxCoeff() /
                                                    f_fd.cwiseAbs().maxCoeff());
    out.hessian_error = std::max(out.hessian_error, (hess - h_fd).cwiseAbs().maxCoeff() /
                                                        h_fd.cwiseAbs().maxCoeff());
  }
  return out;
}

namespace {

std::vector<Vec2> unit_triangular_vectors(double radius) {
  std::vector<Vec2> out;
  const Vec2 a1(1.0, 0.0);
  const Vec2 a2(0.5, 0.5 * std::sqrt(3.0));
  const int m = static_cast<int>(std::ceil(radius * 1.2)) + 1;
  for (int i = -m; i <= m; ++i)
    for (int j = -m; j <= m; ++j) {
      const Vec2 z = i * a1 + j * a2;
      if ((i != 0 || j != 0) && z.norm() <= radius) out.push_back(z);
    }
  return out;
}

struct ScaledEnergy {
  double value;
  double slope;
};

ScaledEnergy scaled_energy(const SitePotential& pot, const std::vector<Vec2>& z, double s) {
  std::vector<Vec2> env;
  std::vector<Vec2> dirs;
  for (const auto& v : z) {
    if (s * v.norm() < pot.cutoff()) {
      env.push_back(s * v);
      dirs.push_back(v);
    }
  }
  std::vector<Vec2> grad(env.size());
  const double e = pot.energy_gradient(env, grad);
  double de = 0.0;
  for (std::size_t k = 0; k < env.size(); ++k) de += grad[k].dot(dirs[k]);
  return {e, de};
}

}  // namespace

double triangular_energy_per_atom(const SitePotential& pot, double s) {
  const auto z = unit_triangular_vectors(pot.cutoff() / s + 1.0);
  return scaled_energy(pot, z, s).value;
}

double calibrate_r0(const SitePotential& pot, double lo, double hi) {
  if (!(lo > 0) || !(hi > lo)) throw Error(ErrorKind::InvalidArgument, "invalid r0 bracket");
  const auto z = unit_triangular_vectors(pot.cutoff() / lo + 1.0);
  auto e = [&](double s) { return scaled_energy(pot, z, s).value; };
  auto de = [&](double s) { return scaled_energy(pot, z, s).slope; };

  // Golden-section search for the bracketed minimum.
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo;
  double b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = e(c);
  double fd = e(d);
  for (int it = 0; it < 200 && (b - a) > 1e-9 * hi; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = e(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = e(d);
    }
  }
  const double guess = 0.5 * (a + b);
  const double edge = 1e-6 * (hi - lo);
  if (guess - lo < edge || hi - guess < edge)
    throw Error(ErrorKind::NoMinimumInBracket, "energy per atom has no interior minimum");

  // Polish the stationarity condition by a safeguarded secant iteration.
  double left = guess - 1e-4 * (hi - lo);
  double right = guess + 1e-4 * (hi - lo);
  double gl = de(left);
  double gr = de(right);
  while (gl > 0 && left > lo) {
    left = std::max(lo, left - 1e-3 * (hi - lo));
    gl = de(left);
  }
  while (gr < 0 && right < hi) {
    right = std::min(hi, right + 1e-3 * (hi - lo));
    gr = de(right);
  }
  if (gl > 0 || gr < 0) throw Error(ErrorKind::NoMinimumInBracket, "derivative does not change sign");
  double s = guess;
  for (int it = 0; it < 200; ++it) {
    double trial = left - gl * (right - left) / (gr - gl);
    if (!(trial > left && trial < right)) trial = 0.5 * (left + right);
    const double g = de(trial);
    s = trial;
    if (std::abs(g) < 1e-13 || (right - left) < 1e-15 * hi) break;
    if (g < 0) {
      // keep the bracket from stalling on one side (Illinois modification)
      left = trial;
      gl = g;
      gr *= 0.5;
    } else {
      right = trial;
      gr = g;
      gl *= 0.5;
    }
  }
  return s;
}

}  // namespace mlipgen
