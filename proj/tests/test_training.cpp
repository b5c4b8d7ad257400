#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "mlipgen/eam.hpp"
#include "mlipgen/errors.hpp"
#include "mlipgen/fit.hpp"
#include "mlipgen/training.hpp"

using namespace mlipgen;

namespace {

struct Setup {
  std::shared_ptr<const EamToyPotential> pot = std::make_shared<EamToyPotential>(EamParams{});
  double r0 = calibrate_r0(*pot, 0.7, 1.3);
  LatticeOptions lopt{3.5, 2.0};
};

BasisSpec basis_for(double r0, int degree) {
  BasisSpec b;
  b.order = 2;
  b.radial_size = 6;
  b.max_m = 3;
  b.max_degree = degree;
  b.cutoff = EamParams{}.cutoff();
  b.r0 = r0;
  b.inner_radius = 0.6 * r0;
  return b;
}

}  // namespace

TEST_CASE("training domains") {
  Setup s;
  const auto d = make_training_domain(8, DefectKind::Vacancy, s.pot, s.r0, {}, s.lopt);
  CHECK(d.lattice->size() == 63);
  CHECK(d.c_bar > 0.0);
  CHECK(d.energy < 0.0);
  const auto small = make_training_domain(4, DefectKind::Vacancy, s.pot, s.r0, {}, s.lopt);
  CHECK(small.lattice->size() == 15);
  CHECK_THROWS_AS(make_training_domain(3, DefectKind::Vacancy, s.pot, s.r0, {}, s.lopt), Error);
  const auto inter = make_training_domain(6, DefectKind::Interstitial, s.pot, s.r0, {}, s.lopt);
  CHECK(inter.lattice->size() == 37);
}

TEST_CASE("sampling") {
  Setup s;
  const auto d = make_training_domain(6, DefectKind::Vacancy, s.pot, s.r0, {}, s.lopt);
  EnergyAssembler ref(d.lattice, s.pot);
  const auto train = sample_configs(d, ref, 200, 0.01, 1);
  const auto test = sample_configs(d, ref, 50, 0.01, 2, true);
  CHECK(train.size() == 200);
  CHECK(test.size() == 50);
  CHECK(test[0].test);
  CHECK_FALSE(train[0].test);

  const auto again = sample_configs(d, ref, 200, 0.01, 1);
  bool same = true;
  for (std::size_t i = 0; i < train.size(); ++i)
    same = same && train[i].u == again[i].u && train[i].energy == again[i].energy && train[i].forces == again[i].forces;
  CHECK(same);

  // the sample spread matches delta r0
  double sum = 0.0;
  long count = 0;
  for (const auto& o : train) {
    sum += (o.u - d.u_bar).squaredNorm();
    count += o.u.size();
  }
  CHECK(std::sqrt(sum / count) == doctest::Approx(0.01 * s.r0).epsilon(0.05));

  const auto flat = sample_configs(d, ref, 3, 0.0, 4);
  for (const auto& o : flat) {
    CHECK(o.u == d.u_bar);
    CHECK(o.forces.colwise().norm().maxCoeff() < 1e-7);
  }
}

TEST_CASE("matching report") {
  Setup s;
  const auto d = make_training_domain(6, DefectKind::Vacancy, s.pot, s.r0, {}, s.lopt);
  EnergyAssembler eam(d.lattice, s.pot);
  const auto samples = sample_configs(d, eam, 40, 0.01, 7);
  const auto basis = build_basis(basis_for(s.r0, 8));
  const FitResult fitted = fit(d, samples, {}, basis, LossWeights{});

  SUBCASE("a reference inside the basis span matches itself") {
    // use the fitted model as the reference so that it lies in the span
    const auto model = fitted.model;
    const auto dm = make_training_domain(6, DefectKind::Vacancy, model, s.r0, {}, s.lopt);
    EnergyAssembler ref(dm.lattice, model);
    const auto obs = sample_configs(dm, ref, 10, 0.01, 9);
    const MatchingReport r = matching_report(dm, ref, obs, model, s.lopt);
    CHECK(r.eps_E < 1e-10);
    CHECK(r.eps_F < 1e-10);
    CHECK(r.eps_FC < 1e-10);
    CHECK(r.eps_FC_hom < 1e-10);

    // perturbing one coefficient scales the errors linearly
    std::vector<double> e, f, fc;
    for (double t : {1e-3, 1e-2, 1e-1}) {
      Eigen::VectorXd c = model->coefficients();
      c[3] += t;
      auto pert = std::make_shared<const SurrogatePotential>(basis, c);
      const MatchingReport q = matching_report(dm, ref, obs, pert, s.lopt);
      e.push_back(q.eps_E);
      f.push_back(q.eps_F);
      fc.push_back(q.eps_FC);
    }
    for (const auto* v : {&e, &f, &fc}) {
      CHECK((*v)[1] / (*v)[0] == doctest::Approx(10.0).epsilon(1e-6));
      CHECK((*v)[2] / (*v)[1] == doctest::Approx(10.0).epsilon(1e-6));
    }
  }

  SUBCASE("a fitted model has force constants within a few percent") {
    const MatchingReport r = matching_report(d, eam, samples, fitted.model, s.lopt);
    CHECK(r.eps_FC_hom_rel > 0.0);
    CHECK(r.eps_FC_hom_rel < 0.1);
    CHECK(r.rmse_F > 0.0);
  }
}

TEST_CASE("force constant error is the energy-norm operator norm") {
  SupercellSpec cell;
  cell.repeat = 4;
  const auto lat = build_lattice(BravaisSpec::triangular(1.0), cell, {});
  StencilLaplacian k(lat);
  // H = 2.5 K on each component: the norm is exactly 2.5
  std::vector<Eigen::Triplet<double>> trips;
  const auto& km = k.matrix();
  for (int o = 0; o < km.outerSize(); ++o)
    for (Eigen::SparseMatrix<double>::InnerIterator it(km, o); it; ++it)
      for (int c = 0; c < 2; ++c) trips.emplace_back(2 * it.row() + c, 2 * it.col() + c, 2.5 * it.value());
  Eigen::SparseMatrix<double> h(2 * lat.size(), 2 * lat.size());
  h.setFromTriplets(trips.begin(), trips.end());
  CHECK(force_constant_error(lat, h) == doctest::Approx(2.5).epsilon(1e-10));
  CHECK(force_constant_error(lat, -h) == doctest::Approx(2.5).epsilon(1e-10));
}

TEST_CASE("training set round trip") {
  Setup s;
  const auto d = make_training_domain(5, DefectKind::Vacancy, s.pot, s.r0, {}, s.lopt);
  EnergyAssembler ref(d.lattice, s.pot);
  auto obs = sample_configs(d, ref, 3, 0.01, 1);
  auto test = sample_configs(d, ref, 2, 0.01, 2, true);
  obs.insert(obs.end(), test.begin(), test.end());
  const auto dir = std::filesystem::temp_directory_path() / "mlipgen_training_rt";
  std::filesystem::create_directories(dir);
  const std::string jsonl = (dir / "t.jsonl").string();
  write_training_set(jsonl, jsonl + ".configs.csv", d, obs, "{\"seed\":1}");
  const auto back = read_training_set(jsonl, d.lattice->size());
  REQUIRE(back.size() == obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    CHECK(back[i].u == obs[i].u);
    CHECK(back[i].energy == obs[i].energy);
    CHECK(back[i].forces == obs[i].forces);
    CHECK(back[i].test == obs[i].test);
  }
  std::filesystem::remove_all(dir);
}
