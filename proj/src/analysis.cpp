#include "mlipgen/analysis.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <tuple>

#include "json.hpp"
#include "mlipgen/errors.hpp"
#include "mlipgen/training.hpp"

namespace mlipgen {

double geometry_error(const DefectedLattice& lattice, const Displacement& u_ref,
                      const Displacement& u_sur) {
  if (u_ref.cols() != lattice.size() || u_sur.cols() != lattice.size())
    throw Error(ErrorKind::LatticeMismatch, "fields do not live on the given lattice");
  return global_stencil_norm(lattice, u_ref - u_sur);
}

double energy_error(const EnergyAssembler& reference, const EnergyAssembler& surrogate,
                    const Displacement& u_ref, const Displacement& u_sur) {
  if (&reference.lattice() != &surrogate.lattice() &&
      reference.lattice().size() != surrogate.lattice().size())
    throw Error(ErrorKind::LatticeMismatch, "energies are evaluated on different lattices");
  return std::abs(reference.energy(u_ref) - surrogate.energy(u_sur));
}

namespace {

struct TrainingData {
  TrainingDomain domain;
  std::vector<Observation> train;
  std::vector<Observation> test;
  std::vector<Observation> all;
};

struct ReferenceState {
  std::shared_ptr<const DefectedLattice> lattice;
  Displacement u;
  Displacement z;
  double energy = 0.0;
};

class StudyContext {
 public:
  explicit StudyContext(const RunConfig& run) : run_(run), reference_(make_reference(run)) {}

  const TrainingData& training(int L, DefectKind kind) {
    auto key = std::make_pair(L, kind);
    auto it = training_.find(key);
    if (it != training_.end()) return it->second;
    TrainingData d;
    d.domain = make_training_domain(L, kind, reference_, run_.r0, run_.minimizer, run_.lattice,
                                    run_.assembler);
    EnergyAssembler ref(d.domain.lattice, reference_, run_.assembler);
    const TrainingSpec& t = run_.training;
    d.train = sample_configs(d.domain, ref, t.n_train, t.delta, t.seed + 1000u * static_cast<unsigned>(L));
    if (t.n_test > 0)
      d.test = sample_configs(d.domain, ref, t.n_test, t.delta,
                              t.seed_test + 1000u * static_cast<unsigned>(L), true);
    d.all = d.train;
    d.all.insert(d.all.end(), d.test.begin(), d.test.end());
    return training_.emplace(key, std::move(d)).first->second;
  }

  const std::map<DefectKind, CoreSolution>& cores(const std::vector<DefectKind>& kinds) {
    for (DefectKind kind : kinds) {
      if (cores_.count(kind)) continue;
      const BravaisSpec bravais = BravaisSpec::triangular(run_.r0);
      SupercellSpec cell;
      cell.repeat = run_.study.core_N;
      DefectSet set;
      set.defects.push_back({kind, defect_position(bravais, kind, 0, 0)});
      auto lat = std::make_shared<const DefectedLattice>(build_lattice(bravais, cell, set, run_.lattice));
      EnergyAssembler a(lat, reference_, run_.assembler);
      const auto eq = equilibrate(a, Displacement::Zero(2, lat->size()), run_.minimizer);
      cores_[kind] = CoreSolution{lat, eq.u, set.defects[0].position};
    }
    return cores_;
  }

  const ReferenceState& reference_state(const std::string& arrangement, int n_D, int L) {
    auto key = std::make_tuple(arrangement, n_D, L);
    auto it = states_.find(key);
    if (it != states_.end()) return it->second;
    SimulationSpec sim{run_.study.N, arrangement, n_D, L};
    ReferenceState s;
    s.lattice = make_simulation_lattice(run_, sim);
    s.z = predictor(*s.lattice, arrangement, L);
    EnergyAssembler a(s.lattice, reference_, run_.assembler);
    const auto eq = equilibrate(a, s.z, run_.minimizer);
    s.u = eq.u;
    s.energy = eq.energy;
    return states_.emplace(key, std::move(s)).first->second;
  }

  const std::shared_ptr<const EamToyPotential>& reference() const { return reference_; }

 private:
  Displacement predictor(const DefectedLattice& lat, const std::string& arrangement, int L) {
    try {
      return build_predictor(lat, cores(arrangement_kinds(arrangement)), L * run_.r0 / 3.0);
    } catch (const Error& e) {
      // Very small separations can leave the interstitial annulus empty.
      if (e.kind() != ErrorKind::EmptyAnnulus) throw;
      return Displacement::Zero(2, lat.size());
    }
  }

  const RunConfig& run_;
  std::shared_ptr<const EamToyPotential> reference_;
  std::map<std::pair<int, DefectKind>, TrainingData> training_;
  std::map<DefectKind, CoreSolution> cores_;
  std::map<std::tuple<std::string, int, int>, ReferenceState> states_;
};

StudyRow run_point(StudyContext& ctx, const RunConfig& run, const std::string& series, int L,
                   int n_D, const BasisChoice& choice) {
  const auto start = std::chrono::steady_clock::now();
  StudyRow row;
  row.series = series;
  row.L = L;
  row.n_D = n_D;
  row.defect_kinds = run.study.arrangement;
  try {
    auto basis = build_basis(basis_spec(run, choice));
    row.basis_size = basis->size();
    const auto kinds = arrangement_kinds(run.study.arrangement);
    const bool mixed = kinds.size() > 1;
    const LossWeights& w = mixed ? run.mixed_weights : run.weights;
    std::vector<TrainingBlock> train, test;
    for (DefectKind kind : kinds) {
      const TrainingData& d = ctx.training(L, kind);
      const auto [we, wf] = w.resolve(kind);
      train.push_back({d.domain.lattice, &d.train, we, wf});
      if (!d.test.empty()) test.push_back({d.domain.lattice, &d.test, we, wf});
    }
    const FitResult fitted = fit(train, test, basis, run.rtol);
    row.rmse_E = test.empty() ? fitted.rmse_E_train : fitted.rmse_E_test;
    row.rmse_F = test.empty() ? fitted.rmse_F_train : fitted.rmse_F_test;
    for (DefectKind kind : kinds) {
      const TrainingData& d = ctx.training(L, kind);
      EnergyAssembler ref(d.domain.lattice, ctx.reference(), run.assembler);
      const MatchingReport rep =
          matching_report(d.domain, ref, d.all, fitted.model, run.lattice, run.assembler);
      row.eps_E = std::max(row.eps_E, rep.eps_E);
      row.eps_F = std::max(row.eps_F, rep.eps_F);
      row.eps_FC = std::max(row.eps_FC, rep.eps_FC);
      row.eps_FC_hom = std::max(row.eps_FC_hom, rep.eps_FC_hom);
    }

    const ReferenceState& state = ctx.reference_state(run.study.arrangement, n_D, L);
    EnergyAssembler ref(state.lattice, ctx.reference(), run.assembler);
    EnergyAssembler sur(state.lattice, fitted.model, run.assembler);
    const EquilibriumResult eq = equilibrate(sur, state.z, run.minimizer);
    row.geometry_error = geometry_error(*state.lattice, state.u, eq.u);
    row.energy_error = std::abs(state.energy - eq.energy);
  } catch (const Error& e) {
    row.status = to_string(e.kind());
  }
  row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

}  // namespace

StudyResult convergence_study(const RunConfig& run, const StudyProgress& progress) {
  StudyContext ctx(run);
  StudyResult res;
  auto record = [&](StudyRow row) {
    if (progress) progress(row);
    res.rows.push_back(std::move(row));
  };
  for (const auto& series : run.study.series) {
    if (series == "rmse") {
      for (const auto& choice : run.study.rmse_bases)
        record(run_point(ctx, run, "rmse", run.study.rmse_L, run.study.rmse_nD, choice));
    } else if (series == "L") {
      for (int L : run.study.L_values)
        record(run_point(ctx, run, "L", L, run.study.L_nD, base_choice(run)));
    } else if (series == "nD") {
      for (int n : run.study.nD_values)
        record(run_point(ctx, run, "nD", run.study.nD_L, n, base_choice(run)));
    }
  }
  res.rates_json = rate_summary(run, res.rows);
  return res;
}

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows, bool record_wall_time) {
  out << "series,L,n_D,defect_kinds,#B,rmse_E,rmse_F,eps_E,eps_F,eps_FC,eps_FC_hom,"
         "geometry_error,energy_error,wall_time,status\n";
  for (const auto& r : rows) {
    out << r.series << ',' << r.L << ',' << r.n_D << ',' << r.defect_kinds << ',' << r.basis_size
        << ',' << fmt(r.rmse_E) << ',' << fmt(r.rmse_F) << ',' << fmt(r.eps_E) << ','
        << fmt(r.eps_F) << ',' << fmt(r.eps_FC) << ',' << fmt(r.eps_FC_hom) << ','
        << fmt(r.geometry_error) << ',' << fmt(r.energy_error) << ','
        << (record_wall_time ? fmt(r.wall_time) : std::string()) << ',' << r.status << '\n';
  }
}

namespace {

nlohmann::json rate_json(const std::vector<std::pair<double, double>>& pts) {
  nlohmann::json j;
  try {
    const RateFit f = fit_rate(pts);
    j["slope"] = f.slope;
    j["intercept"] = f.intercept;
    j["r_squared"] = f.r_squared;
    j["points"] = f.points;
  } catch (const Error& e) {
    j["error"] = to_string(e.kind());
  }
  return j;
}

}  // namespace

std::string rate_summary(const RunConfig& run, const std::vector<StudyRow>& rows) {
  nlohmann::json j;
  j["metadata"] = nlohmann::json::parse(metadata_json(run, run.training.seed));
  std::vector<std::pair<double, double>> geo_rmse, en_rmse, geo_L, en_L;
  std::map<int, double> geo_nD;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    if (r.series == "rmse") {
      geo_rmse.emplace_back(r.rmse_F, r.geometry_error);
      en_rmse.emplace_back(r.rmse_F, r.energy_error);
    } else if (r.series == "L") {
      geo_L.emplace_back(r.L, r.geometry_error);
      en_L.emplace_back(r.L, r.energy_error);
    } else if (r.series == "nD") {
      geo_nD[r.n_D] = r.geometry_error;
    }
  }
  // Drop the largest L when it has reached the minimiser's noise floor.
  const double floor = 10.0 * run.minimizer.g_tol;
  if (!geo_L.empty() && geo_L.back().second < floor) geo_L.pop_back();
  if (!en_L.empty() && en_L.back().second < floor) en_L.pop_back();
  j["rmse"]["geometry_vs_rmse_F"] = rate_json(geo_rmse);
  j["rmse"]["energy_vs_rmse_F"] = rate_json(en_rmse);
  j["L"]["geometry_vs_L"] = rate_json(geo_L);
  j["L"]["energy_vs_L"] = rate_json(en_L);
  if (!geo_nD.empty()) {
    const int base_n = geo_nD.begin()->first;
    const double base = geo_nD.begin()->second;
    for (const auto& [n, g] : geo_nD) {
      nlohmann::json e;
      e["ratio"] = base > 0 ? g / base : 0.0;
      e["sqrt_ratio"] = std::sqrt(double(n) / base_n);
      j["nD"][std::to_string(n)] = e;
    }
  }
  return j.dump(2);
}

}  // namespace mlipgen
