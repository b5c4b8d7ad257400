#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "mlipgen/analysis.hpp"
#include "mlipgen/errors.hpp"
#include "mlipgen/rates.hpp"

using namespace mlipgen;

TEST_CASE("fit_rate on exact power laws") {
  std::vector<std::pair<double, double>> p1, p3;
  for (double L : {4.0, 5.0, 6.0, 7.0, 8.0}) {
    p1.emplace_back(L, 1.0 / L);
    p3.emplace_back(L, 7.0 * std::pow(L, -3.0));
  }
  const RateFit a = fit_rate(p1);
  CHECK(std::abs(a.slope + 1.0) < 1e-12);
  const RateFit b = fit_rate(p3);
  CHECK(std::abs(b.slope + 3.0) < 1e-12);
  CHECK(std::abs(b.intercept - std::log(7.0)) < 1e-12);
  CHECK(b.r_squared == doctest::Approx(1.0));

  // slopes do not change when x or y are rescaled
  std::vector<std::pair<double, double>> noisy{{1, 2.0}, {2, 0.9}, {4, 0.6}, {8, 0.2}};
  const double s0 = fit_rate(noisy).slope;
  for (auto& [x, y] : noisy) {
    x *= 3.7;
    y *= 0.01;
  }
  CHECK(std::abs(fit_rate(noisy).slope - s0) < 1e-12);

  // window
  const RateFit w = fit_rate({{1, 1}, {2, 0.25}, {3, 1.0 / 9}, {4, 1.0 / 16}, {100, 5.0}}, 0.5, 10.0);
  CHECK(w.points == 4);
  CHECK(std::abs(w.slope + 2.0) < 1e-12);
}

TEST_CASE("fit_rate errors") {
  try {
    fit_rate({{1, 1}, {2, 2}});
    FAIL("expected TooFewPoints");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewPoints);
  }
  try {
    fit_rate({{1, 1}, {2, 0}, {3, 1}});
    FAIL("expected NonpositiveValue");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonpositiveValue);
  }
}

TEST_CASE("geometry and energy errors") {
  SupercellSpec cell;
  cell.repeat = 3;
  auto lat = std::make_shared<const DefectedLattice>(build_lattice(BravaisSpec::triangular(1.0), cell, {}));
  std::mt19937_64 rng(31);
  std::normal_distribution<double> normal;
  auto field = [&] {
    Displacement u(2, lat->size());
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = 0.01 * normal(rng);
    return u;
  };
  const Displacement a = field(), b = field(), c = field();
  CHECK(geometry_error(*lat, a, a) == 0.0);
  Displacement shifted = a;
  shifted.colwise() += Vec2(0.3, 0.1);
  CHECK(geometry_error(*lat, a, shifted) < 1e-14);
  CHECK(geometry_error(*lat, a, c) <= geometry_error(*lat, a, b) + geometry_error(*lat, b, c) + 1e-15);
  CHECK(geometry_error(*lat, a, b) == doctest::Approx(geometry_error(*lat, b, a)));

  // double loop over the six lattice directions
  const Mat2 s = lat->supercell();
  double sum = 0.0;
  for (int i = 0; i < lat->size(); ++i)
    for (int j = 0; j < lat->size(); ++j)
      for (int p = -1; p <= 1; ++p)
        for (int q = -1; q <= 1; ++q)
          if (std::abs((lat->position(j) + s * Vec2(p, q) - lat->position(i)).norm() - 1.0) < 1e-9)
            sum += ((a - b).col(j) - (a - b).col(i)).squaredNorm();
  CHECK(geometry_error(*lat, a, b) == doctest::Approx(std::sqrt(sum)).epsilon(1e-12));

  SupercellSpec bigger;
  bigger.repeat = 4;
  const auto other = build_lattice(BravaisSpec::triangular(1.0), bigger, {});
  CHECK_THROWS_AS(geometry_error(other, a, b), Error);
}

TEST_CASE("energy error of identical models vanishes") {
  RunConfig run = load_run_config(Config::parse(""));
  SimulationSpec sim{10, "vacancy", 1, 4};
  auto lat = make_simulation_lattice(run, sim);
  EnergyAssembler ref(lat, make_reference(run), run.assembler);
  const auto eq = equilibrate(ref, Displacement::Zero(2, lat->size()), run.minimizer);
  CHECK(energy_error(ref, ref, eq.u, eq.u) == 0.0);
  CHECK(energy_error(ref, ref, eq.u, Displacement::Zero(2, lat->size())) == doctest::Approx(std::abs(eq.energy)));
}

TEST_CASE("study CSV layout") {
  StudyRow r;
  r.series = "L";
  r.L = 6;
  r.n_D = 2;
  r.defect_kinds = "vacancy";
  r.basis_size = 20;
  r.wall_time = 1.5;
  std::ostringstream os;
  write_study_csv(os, {r}, false);
  std::istringstream is(os.str());
  std::string header, line;
  std::getline(is, header);
  std::getline(is, line);
  CHECK(header ==
        "series,L,n_D,defect_kinds,#B,rmse_E,rmse_F,eps_E,eps_F,eps_FC,eps_FC_hom,geometry_error,energy_error,wall_time,status");
  CHECK(line.rfind("L,6,2,vacancy,20,", 0) == 0);
  CHECK(line.find(",,ok") != std::string::npos);
  std::ostringstream timed;
  write_study_csv(timed, {r}, true);
  CHECK(timed.str().find("1.5000000000e+00,ok") != std::string::npos);
}

TEST_CASE("rate summary skips failed rows and reports fits") {
  RunConfig run = load_run_config(Config::parse(""));
  std::vector<StudyRow> rows;
  for (int L : {4, 5, 6, 7, 8}) {
    StudyRow r;
    r.series = "L";
    r.L = L;
    r.n_D = 2;
    r.geometry_error = 3.0 / L;
    r.energy_error = 2.0 / (L * L);
    rows.push_back(r);
  }
  rows.back().status = "NotConverged";
  const auto j = nlohmann::json::parse(rate_summary(run, rows));
  CHECK(j["L"]["geometry_vs_L"]["slope"].get<double>() == doctest::Approx(-1.0));
  CHECK(j["L"]["geometry_vs_L"]["points"].get<int>() == 4);
  CHECK(j["L"]["energy_vs_L"]["slope"].get<double>() == doctest::Approx(-2.0));
  CHECK(j.contains("metadata"));
}
