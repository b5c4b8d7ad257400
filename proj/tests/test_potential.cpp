#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mlipgen/eam.hpp"
#include "mlipgen/errors.hpp"
#include "mlipgen/kernels.hpp"
#include "mlipgen/potential.hpp"

using namespace mlipgen;

namespace {

std::shared_ptr<const DefectedLattice> make(int n, std::vector<Defect> defects, double r0) {
  SupercellSpec cell;
  cell.repeat = n;
  DefectSet set;
  set.defects = std::move(defects);
  LatticeOptions opt;
  opt.interaction_radius = 3.5;
  return std::make_shared<const DefectedLattice>(build_lattice(BravaisSpec::triangular(r0), cell, set, opt));
}

Displacement random_field(int n, double amp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-amp, amp);
  Displacement u(2, n);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = uni(rng);
  return u;
}

// Morse pair plus sqrt embedding written out from scratch, with images found
// by looping over neighbouring cells.
double oracle_energy(const DefectedLattice& lat, const EamParams& p, const Displacement& u) {
  auto taper = [&](double r) {
    const double s = (r - (p.cutoff() - p.taper_width())) / p.taper_width();
    if (s <= 0) return 1.0;
    if (s >= 1) return 0.0;
    return 1.0 - 10 * s * s * s + 15 * s * s * s * s - 6 * s * s * s * s * s;
  };
  auto site = [&](const Displacement& v) {
    std::vector<double> e(static_cast<std::size_t>(lat.size()));
    const Mat2& s = lat.supercell();
    for (int i = 0; i < lat.size(); ++i) {
      double pair = 0.0, rho = 0.0;
      for (int j = 0; j < lat.size(); ++j)
        for (int a = -3; a <= 3; ++a)
          for (int b = -3; b <= 3; ++b) {
            if (i == j && a == 0 && b == 0) continue;
            const Vec2 y = lat.position(j) + v.col(j) + s * Vec2(a, b) - lat.position(i) - v.col(i);
            const double r = y.norm();
            if (r >= p.cutoff()) continue;
            const double x = std::exp(-p.stiffness * (r - p.eq_length));
            pair += p.depth * (x * x - 2 * x) * taper(r);
            rho += std::exp(-p.density_decay * r) * taper(r);
          }
      e[static_cast<std::size_t>(i)] = 0.5 * pair + p.c1 * std::sqrt(rho) + p.c2 * rho * rho;
    }
    return e;
  };
  const auto e0 = site(Displacement::Zero(2, lat.size()));
  const auto e1 = site(u);
  double total = 0.0;
  for (std::size_t i = 0; i < e0.size(); ++i) total += e1[i] - e0[i];
  return total;
}

}  // namespace

TEST_CASE("energy conventions") {
  EamParams p;
  auto pot = std::make_shared<EamToyPotential>(p);
  const double r0 = calibrate_r0(*pot, 0.7, 1.3);
  auto lat = make(6, {{DefectKind::Vacancy, Vec2::Zero()}}, r0);
  EnergyAssembler a(lat, pot);
  CHECK(a.energy(Displacement::Zero(2, lat->size())) == 0.0);

  auto perfect = make(6, {}, r0);
  EnergyAssembler h(perfect, pot);
  Displacement c(2, perfect->size());
  c.colwise() = Vec2(0.013, -0.021);
  CHECK(std::abs(h.energy(c)) < 1e-12);
  CHECK(h.forces(Displacement::Zero(2, perfect->size())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("energy against a brute-force oracle") {
  EamParams p;
  auto pot = std::make_shared<EamToyPotential>(p);
  const double r0 = calibrate_r0(*pot, 0.7, 1.3);
  for (auto defects : {std::vector<Defect>{}, std::vector<Defect>{{DefectKind::Vacancy, Vec2::Zero()}}}) {
    auto lat = make(3, defects, r0);
    EnergyAssembler a(lat, pot);
    const Displacement u = random_field(lat->size(), 0.03 * r0, 11);
    const double oracle = oracle_energy(*lat, p, u);
    CHECK(a.energy(u) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("forces and Hessian against finite differences") {
  EamParams p;
  auto pot = std::make_shared<EamToyPotential>(p);
  const double r0 = calibrate_r0(*pot, 0.7, 1.3);
  auto lat = make(4, {{DefectKind::Vacancy, Vec2::Zero()}}, r0);
  EnergyAssembler a(lat, pot);

  const SiteVectors f0 = a.forces(Displacement::Zero(2, lat->size()));
  // forces at the unrelaxed vacancy are largest next to it
  int arg = 0;
  f0.colwise().norm().maxCoeff(&arg);
  CHECK(lat->position(arg).norm() == doctest::Approx(r0).epsilon(1e-9));

  const auto check = check_derivatives(a, 3, 0.05, 5);
  CHECK(check.force_error < 1e-6);
  CHECK(check.hessian_error < 1e-5);

  const Displacement u = random_field(lat->size(), 0.05 * r0, 9);
  const SiteVectors f = a.forces(u);
  CHECK(f.rowwise().sum().norm() < 1e-10);
  const Eigen::MatrixXd h = to_dense(a.hessian(u));
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("homogeneous Hessian has exactly two zero modes") {
  EamParams p;
  auto pot = std::make_shared<EamToyPotential>(p);
  const double r0 = calibrate_r0(*pot, 0.7, 1.3);
  auto lat = make(6, {}, r0);
  EnergyAssembler a(lat, pot);
  const Eigen::MatrixXd h = to_dense(a.hessian(Displacement::Zero(2, lat->size())));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const auto& ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  CHECK(std::abs(ev[0]) < 1e-10 * scale);
  CHECK(std::abs(ev[1]) < 1e-10 * scale);
  CHECK(ev[2] > 1e-6 * scale);
}

TEST_CASE("serial and parallel kernels agree") {
  EamParams p;
  auto pot = std::make_shared<EamToyPotential>(p);
  auto lat = make(12, {{DefectKind::Vacancy, Vec2::Zero()}}, 0.96);
  const Displacement u = random_field(lat->size(), 0.02, 13);
  std::vector<double> es(static_cast<std::size_t>(lat->size())), ep(es.size());
  SiteVectors fs, fp;
  const double ts = kernels::energy_forces(kernels::Exec::Serial, *lat, *pot, u, es, fs);
  const double tp = kernels::energy_forces(kernels::Exec::Parallel, *lat, *pot, u, ep, fp);
  CHECK(ts == doctest::Approx(tp).epsilon(1e-14));
  CHECK((fs - fp).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(es == ep);
  std::vector<double> e2(es.size());
  kernels::site_energies(kernels::Exec::Serial, *lat, *pot, u, e2);
  CHECK(e2 == ep);
}

TEST_CASE("r0 calibration") {
  SUBCASE("pair-only potential with nearest-neighbour cutoff") {
    EamParams p;
    p.c1 = 0.0;
    p.c2 = 0.0;
    p.eq_length = 1.1;
    p.cutoff_factor = 1.4;
    p.taper_width_factor = 0.2;
    EamToyPotential pot(p);
    CHECK(calibrate_r0(pot, 0.8, 1.4) == doctest::Approx(1.1).epsilon(1e-10));
    p.depth = 2.0;
    CHECK(calibrate_r0(EamToyPotential(p), 0.8, 1.4) == doctest::Approx(1.1).epsilon(1e-10));
  }
  SUBCASE("full potential is stationary at r0") {
    EamToyPotential pot{EamParams{}};
    const double r0 = calibrate_r0(pot, 0.7, 1.3);
    const double h = 1e-6;
    const double de = (triangular_energy_per_atom(pot, r0 + h) - triangular_energy_per_atom(pot, r0 - h)) / (2 * h);
    CHECK(std::abs(de) < 1e-8);
    CHECK(triangular_energy_per_atom(pot, r0) < triangular_energy_per_atom(pot, 0.99 * r0));
    CHECK(triangular_energy_per_atom(pot, r0) < triangular_energy_per_atom(pot, 1.01 * r0));
  }
  SUBCASE("bracket without interior minimum") {
    EamToyPotential pot{EamParams{}};
    CHECK_THROWS_AS(calibrate_r0(pot, 0.5, 0.6), Error);
  }
}

TEST_CASE("cutoff must fit inside the interaction lists") {
  EamParams p;
  p.cutoff_factor = 5.0;
  auto pot = std::make_shared<EamToyPotential>(p);
  auto lat = make(10, {}, 1.0);
  CHECK_THROWS_AS(EnergyAssembler(lat, pot), Error);
}
