#include "mlipgen/setup.hpp"

#include <algorithm>

#include "json.hpp"
#include "mlipgen/errors.hpp"

namespace mlipgen {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "output.dir",
      "potential.depth", "potential.stiffness", "potential.eq_length", "potential.c1",
      "potential.c2", "potential.density_decay", "potential.cutoff_factor",
      "potential.taper_width_factor",
      "lattice.r0", "lattice.interaction_radius", "lattice.admissibility",
      "lattice.admissibility_radius",
      "simulation.N", "simulation.arrangement", "simulation.n_D", "simulation.separation",
      "minimizer.g_tol", "minimizer.max_iterations", "minimizer.max_step",
      "minimizer.precondition",
      "basis.order", "basis.max_degree", "basis.radial_size", "basis.max_m",
      "basis.inner_radius_factor",
      "training.L", "training.defect", "training.n_train", "training.n_test", "training.delta",
      "training.seed", "training.seed_test",
      "weights.we", "weights.wf", "weights.we_int", "weights.wf_int", "weights.we_vac",
      "weights.wf_vac",
      "fit.rtol",
      "study.N", "study.core_N", "study.series", "study.arrangement", "study.record_wall_time",
      "study.rmse.L", "study.rmse.n_D", "study.rmse.order", "study.rmse.radial_size",
      "study.rmse.max_m", "study.rmse.max_degree",
      "study.L.values", "study.L.n_D",
      "study.nD.L", "study.nD.values",
  };
  return keys;
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw Error(ErrorKind::ConfigParse, "config key '" + key + "' " + what);
}

std::vector<int> broadcast(const Config& c, const std::string& key, int fallback, std::size_t n) {
  std::vector<int> v = c.get_ints(key, {fallback});
  if (v.size() == 1) v.assign(n, v[0]);
  check(v.size() == n, key, "must have one entry per basis or a single value");
  return v;
}

}  // namespace

RunConfig load_run_config(const Config& c) {
  c.require_known(known_keys());
  RunConfig run;
  run.source = c;
  run.output_dir = c.get_string("output.dir", ".");

  EamParams& e = run.eam;
  e.depth = c.get_double("potential.depth", e.depth);
  e.stiffness = c.get_double("potential.stiffness", e.stiffness);
  e.eq_length = c.get_double("potential.eq_length", e.eq_length);
  e.c1 = c.get_double("potential.c1", e.c1);
  e.c2 = c.get_double("potential.c2", e.c2);
  e.density_decay = c.get_double("potential.density_decay", e.density_decay);
  e.cutoff_factor = c.get_double("potential.cutoff_factor", e.cutoff_factor);
  e.taper_width_factor = c.get_double("potential.taper_width_factor", e.taper_width_factor);
  try {
    e.validate();
  } catch (const Error& err) {
    throw Error(ErrorKind::ConfigParse, std::string("section 'potential': ") + err.what());
  }

  if (c.has("lattice.r0") && std::holds_alternative<double>(c.values().at("lattice.r0"))) {
    run.r0_auto = false;
    run.r0 = c.get_double("lattice.r0", 1.0);
    check(run.r0 > 0, "lattice.r0", "must be positive");
  } else {
    check(c.get_string("lattice.r0", "auto") == "auto", "lattice.r0", "must be a number or \"auto\"");
  }
  run.lattice.interaction_radius = c.get_double("lattice.interaction_radius", 3.5);
  run.assembler.admissibility = c.get_double("lattice.admissibility", 0.5);
  run.assembler.admissibility_radius = c.get_double("lattice.admissibility_radius", 3.0);
  check(run.assembler.admissibility > 0, "lattice.admissibility", "must be positive");

  run.simulation.N = c.get_int("simulation.N", 60);
  run.simulation.arrangement = c.get_string("simulation.arrangement", "vacancy");
  run.simulation.n_D = c.get_int("simulation.n_D", 2);
  run.simulation.separation = c.get_int("simulation.separation", 8);
  check(run.simulation.N >= 4, "simulation.N", "must be at least 4");
  check(run.simulation.arrangement == "vacancy" || run.simulation.arrangement == "interstitial-vacancy",
        "simulation.arrangement", "must be \"vacancy\" or \"interstitial-vacancy\"");
  check(run.simulation.n_D >= 1 && run.simulation.n_D <= 4, "simulation.n_D", "must lie in 1..4");

  run.minimizer.g_tol = c.get_double("minimizer.g_tol", 1e-8);
  run.minimizer.max_iterations = c.get_int("minimizer.max_iterations", 20000);
  run.minimizer.max_step = c.get_double("minimizer.max_step", 0.1);
  run.minimizer.precondition = c.get_bool("minimizer.precondition", true);
  check(run.minimizer.g_tol > 0, "minimizer.g_tol", "must be positive");

  run.basis.order = c.get_int("basis.order", 2);
  run.basis.max_degree = c.get_int("basis.max_degree", 12);
  run.basis.radial_size = c.get_int("basis.radial_size", 6);
  run.basis.max_m = c.get_int("basis.max_m", 3);
  run.inner_radius_factor = c.get_double("basis.inner_radius_factor", 0.6);
  check(run.basis.order >= 1 && run.basis.order <= 3, "basis.order", "must be 1, 2 or 3");

  TrainingSpec& t = run.training;
  t.L = c.get_int("training.L", 8);
  try {
    t.kind = defect_kind_from_string(c.get_string("training.defect", "vacancy"));
  } catch (const Error&) {
    check(false, "training.defect", "must be \"vacancy\" or \"interstitial\"");
  }
  t.n_train = c.get_int("training.n_train", 200);
  t.n_test = c.get_int("training.n_test", 50);
  t.delta = c.get_double("training.delta", 0.01);
  t.seed = static_cast<std::uint64_t>(c.get_int("training.seed", 1));
  t.seed_test = static_cast<std::uint64_t>(c.get_int("training.seed_test", 2));
  check(t.L >= 4, "training.L", "must be at least 4");
  check(t.n_train >= 1, "training.n_train", "must be positive");
  check(t.n_test >= 0, "training.n_test", "must be nonnegative");
  check(t.delta >= 0, "training.delta", "must be nonnegative");

  run.weights.W_E = c.get_double("weights.we", 100.0);
  run.weights.W_F = c.get_double("weights.wf", 1.0);
  run.mixed_weights.W_E = run.weights.W_E;
  run.mixed_weights.W_F = run.weights.W_F;
  run.mixed_weights.per_kind[DefectKind::Interstitial] = {c.get_double("weights.we_int", 100.0),
                                                          c.get_double("weights.wf_int", 10.0)};
  run.mixed_weights.per_kind[DefectKind::Vacancy] = {c.get_double("weights.we_vac", 10.0),
                                                     c.get_double("weights.wf_vac", 1.0)};
  try {
    run.weights.validate();
    run.mixed_weights.validate();
  } catch (const Error& err) {
    throw Error(ErrorKind::ConfigParse, std::string("section 'weights': ") + err.what());
  }
  run.rtol = c.get_double("fit.rtol", 1e-6);
  check(run.rtol > 0 && run.rtol < 1, "fit.rtol", "must lie in (0, 1)");

  StudySpec& s = run.study;
  s.N = c.get_int("study.N", 60);
  s.core_N = c.get_int("study.core_N", s.N);
  s.series = c.get_strings("study.series", s.series);
  for (const auto& name : s.series)
    check(name == "rmse" || name == "L" || name == "nD", "study.series", "entries must be rmse, L or nD");
  s.arrangement = c.get_string("study.arrangement", "vacancy");
  check(s.arrangement == "vacancy" || s.arrangement == "interstitial-vacancy", "study.arrangement",
        "must be \"vacancy\" or \"interstitial-vacancy\"");
  s.record_wall_time = c.get_bool("study.record_wall_time", false);
  s.rmse_L = c.get_int("study.rmse.L", 8);
  s.rmse_nD = c.get_int("study.rmse.n_D", 2);
  const std::vector<int> degrees = c.get_ints("study.rmse.max_degree", {6, 8, 10, 12});
  const auto orders = broadcast(c, "study.rmse.order", run.basis.order, degrees.size());
  const auto radial = broadcast(c, "study.rmse.radial_size", run.basis.radial_size, degrees.size());
  const auto ms = broadcast(c, "study.rmse.max_m", run.basis.max_m, degrees.size());
  for (std::size_t i = 0; i < degrees.size(); ++i)
    s.rmse_bases.push_back({orders[i], radial[i], ms[i], degrees[i]});
  s.L_values = c.get_ints("study.L.values", s.L_values);
  s.L_nD = c.get_int("study.L.n_D", s.L_nD);
  s.nD_L = c.get_int("study.nD.L", s.nD_L);
  s.nD_values = c.get_ints("study.nD.values", s.nD_values);
  for (int L : s.L_values) check(L >= 4 && 2 * L < s.N, "study.L.values", "entries must satisfy 4 <= L < N/2");
  for (int n : s.nD_values) check(n >= 1 && n <= 4, "study.nD.values", "entries must lie in 1..4");

  if (run.r0_auto) {
    auto pot = make_reference(run);
    run.r0 = calibrate_r0(*pot, 0.7 * run.eam.eq_length, 1.3 * run.eam.eq_length);
  }
  check(run.lattice.interaction_radius * run.r0 > run.eam.cutoff(), "lattice.interaction_radius",
        "must exceed the potential cutoff in units of r0");
  return run;
}

std::shared_ptr<const EamToyPotential> make_reference(const RunConfig& run) {
  return std::make_shared<const EamToyPotential>(run.eam);
}

BasisChoice base_choice(const RunConfig& run) {
  return {run.basis.order, run.basis.radial_size, run.basis.max_m, run.basis.max_degree};
}

BasisSpec basis_spec(const RunConfig& run, const BasisChoice& choice) {
  BasisSpec b = run.basis;
  b.order = choice.order;
  b.radial_size = choice.radial_size;
  b.max_m = choice.max_m;
  b.max_degree = choice.max_degree;
  b.cutoff = run.eam.cutoff();
  b.r0 = run.r0;
  b.inner_radius = run.inner_radius_factor * run.r0;
  return b;
}

std::vector<DefectKind> arrangement_kinds(const std::string& arrangement) {
  if (arrangement == "vacancy") return {DefectKind::Vacancy};
  if (arrangement == "interstitial-vacancy") return {DefectKind::Interstitial, DefectKind::Vacancy};
  throw Error(ErrorKind::InvalidArgument, "unknown arrangement '" + arrangement + "'");
}

DefectSet arrangement_defects(const BravaisSpec& bravais, const std::string& arrangement, int n_D,
                              int separation) {
  if (n_D < 1 || n_D > 4) throw Error(ErrorKind::InvalidArgument, "n_D must lie in 1..4");
  const int L = separation;
  // corners of two equilateral triangles sharing the edge (L,0)-(0,L)
  const std::vector<Eigen::Vector2i> sites{{0, 0}, {L, 0}, {0, L}, {L, L}};
  DefectSet set;
  for (int i = 0; i < n_D; ++i) {
    const auto& z = sites[static_cast<std::size_t>(i)];
    const DefectKind kind = (arrangement == "interstitial-vacancy" && i == 0) ? DefectKind::Interstitial
                                                                             : DefectKind::Vacancy;
    if (arrangement != "vacancy" && arrangement != "interstitial-vacancy")
      throw Error(ErrorKind::InvalidArgument, "unknown arrangement '" + arrangement + "'");
    Vec2 p = bravais.cell * z.cast<double>();
    if (kind == DefectKind::Interstitial) p += bravais.cell * Vec2(1.0 / 3.0, 1.0 / 3.0);
    set.defects.push_back({kind, p});
  }
  return set;
}

std::shared_ptr<const DefectedLattice> make_simulation_lattice(const RunConfig& run,
                                                               const SimulationSpec& sim) {
  const BravaisSpec bravais = BravaisSpec::triangular(run.r0);
  SupercellSpec cell;
  cell.repeat = sim.N;
  const DefectSet defects = arrangement_defects(bravais, sim.arrangement, sim.n_D, sim.separation);
  return std::make_shared<const DefectedLattice>(build_lattice(bravais, cell, defects, run.lattice));
}

std::string metadata_json(const RunConfig& run, std::uint64_t seed) {
  nlohmann::json j;
  j["config_hash"] = run.source.hash();
  j["seed"] = seed;
  j["version"] = kVersion;
  return j.dump();
}

}  // namespace mlipgen
