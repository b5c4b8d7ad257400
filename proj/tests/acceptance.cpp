// Acceptance suite: one PASS/FAIL line per criterion. A measured FAIL is a
// result; the exit status is nonzero only when a criterion could not be evaluated.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mlipgen/analysis.hpp"
#include "mlipgen/rates.hpp"
#include "mlipgen/setup.hpp"

using namespace mlipgen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool evaluated = true;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? v : fallback;
}

int failures = 0;
int broken = 0;

void report(int id, const std::string& name, double budget, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what(), false};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget > 0 && secs > budget) {
    o.pass = false;
    o.detail += "; over the " + num(budget) + " s budget";
  }
  if (!o.pass) ++failures;
  if (!o.evaluated) ++broken;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << " ("
            << num(secs) << " s)" << std::endl;
}

RunConfig run_config() {
  const std::string path = env_or("MLIPGEN_SOURCE", ".") + "/configs/default.toml";
  return load_run_config(Config::load(path));
}

std::shared_ptr<const DefectedLattice> cell(const RunConfig& run, int n, const DefectSet& defects) {
  SupercellSpec c;
  c.repeat = n;
  return std::make_shared<const DefectedLattice>(
      build_lattice(BravaisSpec::triangular(run.r0), c, defects, run.lattice));
}

DefectSet single(const RunConfig& run, DefectKind kind) {
  DefectSet s;
  s.defects.push_back({kind, defect_position(BravaisSpec::triangular(run.r0), kind, 0, 0)});
  return s;
}

struct Core {
  std::shared_ptr<const DefectedLattice> lattice;
  CoreSolution solution;
};

Core vacancy_core(const RunConfig& run, int n) {
  const DefectSet one = single(run, DefectKind::Vacancy);
  auto lat = cell(run, n, one);
  EnergyAssembler a(lat, make_reference(run), run.assembler);
  const auto eq = equilibrate(a, Displacement::Zero(2, lat->size()), run.minimizer);
  return {lat, CoreSolution{lat, eq.u, one.defects[0].position}};
}

struct StudyRun {
  fs::path csv;
  json summary;
  double seconds = 0.0;
};

StudyRun run_study(const fs::path& dir, const std::string& tag) {
  const std::string cli = env_or("MLIPGEN_CLI", "./mlipgen");
  const std::string cfg = env_or("MLIPGEN_SOURCE", ".") + "/configs/default.toml";
  StudyRun out;
  out.csv = dir / (tag + ".csv");
  const fs::path summary = dir / (tag + "_rates.json");
  const std::string cmd = cli + " study --config " + cfg + " --quiet --out " + out.csv.string() +
                          " --summary " + summary.string() + " > /dev/null";
  const auto start = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (rc != 0) throw std::runtime_error("study exited with status " + std::to_string(rc));
  std::ifstream in(summary);
  out.summary = json::parse(in);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome slope_check(const json& fit, double lo, double hi, const std::string& label) {
  if (!fit.contains("slope")) return {false, label + " " + fit.value("error", std::string("missing"))};
  const double s = fit["slope"].get<double>();
  const std::string window = std::isinf(lo) ? "at most " + num(hi) : "window [" + num(lo) + ", " + num(hi) + "]";
  return {s >= lo && s <= hi,
          label + " slope " + num(s) + " (R^2 " + num(fit["r_squared"].get<double>()) + ", " + window + ")"};
}

Outcome both(const Outcome& a, const Outcome& b) { return {a.pass && b.pass, a.detail + "; " + b.detail}; }

}  // namespace

int main() {
  const RunConfig run = run_config();
  const auto ref = make_reference(run);

  report(1, "derivative correctness", 60, [&] {
    auto lat = cell(run, 5, single(run, DefectKind::Vacancy));
    EnergyAssembler a(lat, ref, run.assembler);
    const DerivativeCheck c = check_derivatives(a, 10, 0.05, 7);
    return Outcome{c.force_error < 1e-6 && c.hessian_error < 1e-5,
                   "forces " + num(c.force_error) + ", Hessian " + num(c.hessian_error)};
  });

  report(2, "phonon stability", 60, [&] {
    auto lat = cell(run, 10, {});
    EnergyAssembler a(lat, ref, run.assembler);
    const double lambda = check_stability(a, Displacement::Zero(2, lat->size()));
    return Outcome{lambda > 0, "smallest eigenvalue " + num(lambda)};
  });

  report(3, "vacancy decay", 600, [&] {
    const Core core = vacancy_core(run, 40);
    const RateFit f = check_decay(*core.lattice, core.solution.u, core.solution.center);
    return Outcome{f.slope <= -1.6, "slope " + num(f.slope) + " (R^2 " + num(f.r_squared) + ")"};
  });

  // The 60 x 60 core serves criteria 4 to 6.
  Core core;
  report(4, "truncation rate", 300, [&] {
    core = vacancy_core(run, run.study.core_N);
    std::vector<std::pair<double, double>> pts;
    for (int R : {6, 8, 10, 12}) {
      const Displacement t = truncate(*core.lattice, core.solution.u, {core.solution.center, R * run.r0});
      pts.emplace_back(R, global_stencil_norm(*core.lattice, t - core.solution.u));
    }
    const RateFit f = fit_rate(pts);
    return Outcome{std::abs(f.slope + 1.0) <= 0.3, "slope " + num(f.slope) + " (R^2 " + num(f.r_squared) + ")"};
  });

  std::vector<std::pair<double, double>> residuals, correctors;
  double two_vacancy_seconds = 0.0;
  report(5, "predictor residual", 900, [&] {
    const auto start = std::chrono::steady_clock::now();
    if (!core.lattice) core = vacancy_core(run, run.study.core_N);
    const std::map<DefectKind, CoreSolution> cores{{DefectKind::Vacancy, core.solution}};
    for (int ld : {8, 12, 16, 20}) {
      auto lat = make_simulation_lattice(run, SimulationSpec{run.study.N, "vacancy", 2, ld});
      EnergyAssembler a(lat, ref, run.assembler);
      const Displacement z = build_predictor(*lat, cores, ld * run.r0 / 3.0);
      residuals.emplace_back(ld, dual_norm(*lat, a.forces(z)));
      const auto eq = equilibrate(a, z, run.minimizer);
      correctors.emplace_back(ld, global_stencil_norm(*lat, eq.u - z));
    }
    two_vacancy_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const RateFit f = fit_rate(residuals);
    return Outcome{std::abs(f.slope + 1.0) <= 0.3, "slope " + num(f.slope) + " (R^2 " + num(f.r_squared) + ")"};
  });

  report(6, "corrector decay", 1200, [&] {
    if (correctors.size() != 4) return Outcome{false, "two-vacancy equilibria unavailable", false};
    const RateFit f = fit_rate(correctors);
    return Outcome{f.slope <= -0.6, "slope " + num(f.slope) + " (R^2 " + num(f.r_squared) +
                                        "), equilibria took " + num(two_vacancy_seconds) + " s"};
  });

  const fs::path dir = fs::temp_directory_path() / "mlipgen_acceptance";
  fs::create_directories(dir);
  StudyRun first;
  bool have_study = false;
  std::string study_error;
  try {
    first = run_study(dir, "first");
    have_study = true;
  } catch (const std::exception& e) {
    study_error = e.what();
  }
  // The three series share one study run; each is held to its own budget
  // against the total study time, which bounds all of them.
  auto from_study = [&](auto body) {
    return [&, body] {
      if (!have_study) return Outcome{false, "study failed: " + study_error, false};
      Outcome o = body(first.summary);
      o.detail += ", study took " + num(first.seconds) + " s";
      return o;
    };
  };

  report(7, "error against RMSE", 0, from_study([&](const json& s) {
    const Outcome o = both(slope_check(s["rmse"]["geometry_vs_rmse_F"], 0.7, 1.3, "geometry"),
                           slope_check(s["rmse"]["energy_vs_rmse_F"], 1.6, 2.6, "energy"));
    return Outcome{o.pass && first.seconds <= 1800, o.detail};
  }));

  report(8, "error against L", 0, from_study([&](const json& s) {
    const Outcome o = both(slope_check(s["L"]["geometry_vs_L"], -1.4, -0.6, "geometry"),
                           slope_check(s["L"]["energy_vs_L"], -INFINITY, -1.6, "energy"));
    return Outcome{o.pass && first.seconds <= 3600, o.detail};
  }));

  report(9, "defect count scaling", 0, from_study([&](const json& s) {
    bool ok = s.contains("nD") && s["nD"].size() >= 3;
    std::string detail;
    if (ok) {
      for (const auto& [key, v] : s["nD"].items()) {
        if (!v.contains("ratio")) {
          ok = false;
          detail += "n_D=" + key + " failed; ";
          continue;
        }
        const double q = v["ratio"].get<double>() / v["sqrt_ratio"].get<double>();
        ok = ok && q <= 1.5 && q >= 1.0 / 1.5;
        detail += "n_D=" + key + " ratio " + num(v["ratio"].get<double>()) + " vs " +
                  num(v["sqrt_ratio"].get<double>()) + "; ";
      }
    } else {
      detail = "missing series; ";
    }
    detail.resize(detail.size() - 2);
    return Outcome{ok && first.seconds <= 1800, detail};
  }));

  report(10, "rr-QR oracle", 10, [] {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal;
    auto random = [&](int m, int n) {
      Eigen::MatrixXd a(m, n);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
      return a;
    };
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const int m = 30 + 10 * t, n = 4 + t % 7;
      const Eigen::MatrixXd a = random(m, n);
      const Eigen::VectorXd y = random(m, 1);
      const Eigen::VectorXd oracle = (a.transpose() * a).ldlt().solve(a.transpose() * y);
      worst = std::max(worst, (solve_rrqr(a, y).coefficients - oracle).norm() / oracle.norm());
    }
    const Eigen::MatrixXd a = random(40, 5);
    Eigen::MatrixXd dup(40, 6);
    dup << a, a.col(2);
    const int rank = solve_rrqr(dup, random(40, 1)).rank;
    return Outcome{worst < 1e-8 && rank == 5,
                   "worst relative deviation " + num(worst) + ", duplicated-column rank " + std::to_string(rank)};
  });

  report(11, "invariance suite", 60, [&] {
    const auto basis = build_basis(basis_spec(run, base_choice(run)));
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double rc = basis->spec().cutoff;
    std::vector<double> row(static_cast<std::size_t>(basis->size())), moved_row(row.size());
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Vec2> env;
      for (int j = 0; j < 12; ++j) {
        const double r = (0.7 + (rc / run.r0 - 0.75) * uni(rng)) * run.r0;
        const double t = 2 * std::numbers::pi * uni(rng);
        env.emplace_back(r * std::cos(t), r * std::sin(t));
      }
      const double t = 2 * std::numbers::pi * uni(rng);
      Mat2 q;
      q << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
      if (trial % 2) q.col(1) *= -1.0;
      std::vector<Vec2> moved;
      for (const auto& g : env) moved.push_back(q * g);
      std::shuffle(moved.begin(), moved.end(), rng);
      basis->design_row(env, row);
      basis->design_row(moved, moved_row);
      double scale = 0.0, diff = 0.0;
      for (std::size_t i = 0; i < row.size(); ++i) {
        scale = std::max(scale, std::abs(row[i]));
        diff = std::max(diff, std::abs(row[i] - moved_row[i]));
      }
      worst = std::max(worst, diff / scale);
    }
    return Outcome{worst < 1e-12, std::to_string(basis->size()) + " functions, worst relative change " + num(worst)};
  });

  report(12, "determinism", 0, [&] {
    if (!have_study) return Outcome{false, "study failed: " + study_error, false};
    const StudyRun second = run_study(dir, "second");
    const bool same = slurp(first.csv) == slurp(second.csv);
    return Outcome{same, same ? "CSVs are byte-identical" : "CSVs differ"};
  });

  fs::remove_all(dir);
  std::cout << 12 - failures << " of 12 criteria passed";
  if (broken) std::cout << ", " << broken << " could not be evaluated";
  std::cout << std::endl;
  return broken == 0 ? 0 : 1;
}
