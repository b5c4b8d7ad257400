#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mlipgen/analysis.hpp"
#include "mlipgen/errors.hpp"
#include "mlipgen/setup.hpp"
#include "mlipgen/training.hpp"

using namespace mlipgen;
using nlohmann::json;

namespace {

json meta(const RunConfig& run, std::uint64_t seed) { return json::parse(metadata_json(run, seed)); }

void write_text(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::StageFailure, "cannot write " + path);
  out << text;
}

std::string in_output(const RunConfig& run, const std::string& name) {
  if (std::filesystem::path(name).is_absolute()) return name;
  return (std::filesystem::path(run.output_dir) / name).string();
}

RunConfig load(const std::string& path) { return load_run_config(Config::load(path)); }

int cmd_generate_lattice(const std::string& cfg_path, const std::string& out) {
  const RunConfig run = load(cfg_path);
  const auto lat = make_simulation_lattice(run, run.simulation);
  std::ostringstream os;
  os << "# " << metadata_json(run, 0) << '\n';
  write_xyz(os, *lat);
  write_text(in_output(run, out), os.str());
  json j;
  j["metadata"] = meta(run, 0);
  j["sites"] = lat->size();
  j["r0"] = run.r0;
  j["min_separation"] = min_separation(*lat);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_equilibrate(const std::string& cfg_path, const std::string& prefix) {
  const RunConfig run = load(cfg_path);
  const auto lat = make_simulation_lattice(run, run.simulation);
  EnergyAssembler a(lat, make_reference(run), run.assembler);
  EquilibriumResult eq = equilibrate(a, Displacement::Zero(2, lat->size()), run.minimizer);
  eq.c_bar = check_stability(a, eq.u);
  json j;
  j["metadata"] = meta(run, 0);
  j["energy"] = eq.energy;
  j["residual_force_norm"] = eq.residual_force_norm;
  j["c_bar"] = eq.c_bar;
  j["converged"] = eq.converged;
  j["iterations"] = eq.iterations;
  write_text(in_output(run, prefix + ".json"), j.dump(2) + "\n");
  std::ostringstream os;
  os << std::setprecision(17) << "# " << metadata_json(run, 0) << "\nsite,x,y,ux,uy\n";
  for (int i = 0; i < lat->size(); ++i)
    os << i << ',' << lat->position(i).x() << ',' << lat->position(i).y() << ',' << eq.u(0, i) << ','
       << eq.u(1, i) << '\n';
  write_text(in_output(run, prefix + ".csv"), os.str());
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct TrainingFlags {
  int L = -1;
  std::string defect;
  int n_train = -1;
  int n_test = -1;
  double delta = -1.0;
  long seed = -1;
};

void apply(RunConfig& run, const TrainingFlags& f) {
  if (f.L > 0) run.training.L = f.L;
  if (!f.defect.empty()) run.training.kind = defect_kind_from_string(f.defect);
  if (f.n_train > 0) run.training.n_train = f.n_train;
  if (f.n_test >= 0) run.training.n_test = f.n_test;
  if (f.delta >= 0) run.training.delta = f.delta;
  if (f.seed >= 0) {
    run.training.seed = static_cast<std::uint64_t>(f.seed);
    run.training.seed_test = static_cast<std::uint64_t>(f.seed) + 1;
  }
}

int cmd_make_training_set(const std::string& cfg_path, const TrainingFlags& flags, const std::string& out) {
  RunConfig run = load(cfg_path);
  apply(run, flags);
  const TrainingSpec& t = run.training;
  auto ref = make_reference(run);
  const TrainingDomain d = make_training_domain(t.L, t.kind, ref, run.r0, run.minimizer, run.lattice, run.assembler);
  EnergyAssembler a(d.lattice, ref, run.assembler);
  auto obs = sample_configs(d, a, t.n_train, t.delta, t.seed);
  if (t.n_test > 0) {
    auto test = sample_configs(d, a, t.n_test, t.delta, t.seed_test, true);
    obs.insert(obs.end(), test.begin(), test.end());
  }
  const std::string path = in_output(run, out);
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  write_training_set(path, path + ".configs.csv", d, obs, metadata_json(run, t.seed));
  json j;
  j["metadata"] = meta(run, t.seed);
  j["training_set"] = path;
  j["sites"] = d.lattice->size();
  j["c_bar"] = d.c_bar;
  j["n_train"] = t.n_train;
  j["n_test"] = t.n_test;
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct LoadedSet {
  TrainingDomain domain;
  std::vector<Observation> train, test, all;
};

LoadedSet load_set(const RunConfig& run, const std::string& path, bool equilibrate_domain) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::StageFailure, "cannot read " + path);
  std::string line;
  std::getline(in, line);
  const json header = json::parse(line);
  LoadedSet s;
  const int L = header.at("L").get<int>();
  const DefectKind kind = defect_kind_from_string(header.at("defect").get<std::string>());
  if (equilibrate_domain) {
    s.domain = make_training_domain(L, kind, make_reference(run), run.r0, run.minimizer, run.lattice, run.assembler);
  } else {
    const BravaisSpec b = BravaisSpec::triangular(run.r0);
    SupercellSpec cell;
    cell.repeat = L;
    DefectSet defects;
    defects.defects.push_back({kind, defect_position(b, kind, 0, 0)});
    s.domain.L = L;
    s.domain.kind = kind;
    s.domain.lattice = std::make_shared<const DefectedLattice>(build_lattice(b, cell, defects, run.lattice));
  }
  s.all = read_training_set(path, s.domain.lattice->size());
  for (const auto& o : s.all) (o.test ? s.test : s.train).push_back(o);
  return s;
}

struct FitFlags {
  int order = -1;
  int degree = -1;
  double we = -1.0;
  double wf = -1.0;
  double rtol = -1.0;
};

int cmd_fit(const std::string& cfg_path, const std::string& training, const FitFlags& f,
            const std::string& model_out) {
  RunConfig run = load(cfg_path);
  if (f.order > 0) run.basis.order = f.order;
  if (f.degree > 0) run.basis.max_degree = f.degree;
  if (f.we >= 0) run.weights.W_E = f.we;
  if (f.wf >= 0) run.weights.W_F = f.wf;
  if (f.rtol > 0) run.rtol = f.rtol;
  const LoadedSet s = load_set(run, training, false);
  auto basis = build_basis(basis_spec(run, base_choice(run)));
  const FitResult r = fit(s.domain, s.train, s.test, basis, run.weights, run.rtol);
  json model = json::parse(model_to_json(*r.model));
  model["metadata"] = meta(run, run.training.seed);
  write_text(in_output(run, model_out), model.dump(2) + "\n");
  json j;
  j["metadata"] = meta(run, run.training.seed);
  j["basis_size"] = basis->size();
  j["rank"] = r.rank;
  j["loss"] = r.loss;
  j["rmse_E_train"] = r.rmse_E_train;
  j["rmse_F_train"] = r.rmse_F_train;
  j["rmse_E_test"] = r.rmse_E_test;
  j["rmse_F_test"] = r.rmse_F_test;
  j["energy_rmse_convention"] = "per site";
  j["energy_loss_convention"] = "per structure";
  j["fit_wall_time"] = r.wall_time;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_report_matching(const std::string& cfg_path, const std::string& training, const std::string& model_path) {
  const RunConfig run = load(cfg_path);
  std::ifstream in(model_path);
  if (!in) throw Error(ErrorKind::StageFailure, "cannot read " + model_path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto model = std::make_shared<const SurrogatePotential>(model_from_json(ss.str()));
  const LoadedSet s = load_set(run, training, true);
  EnergyAssembler ref(s.domain.lattice, make_reference(run), run.assembler);
  const MatchingReport rep = matching_report(s.domain, ref, s.all, model, run.lattice, run.assembler);
  json j;
  j["metadata"] = meta(run, run.training.seed);
  j["eps_E"] = rep.eps_E;
  j["eps_F"] = rep.eps_F;
  j["eps_FC"] = rep.eps_FC;
  j["eps_FC_hom"] = rep.eps_FC_hom;
  j["eps_FC_hom_rel"] = rep.eps_FC_hom_rel;
  j["rmse_E"] = rep.rmse_E;
  j["rmse_F"] = rep.rmse_F;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_study(const std::string& cfg_path, const std::string& csv, const std::string& summary, bool quiet) {
  const RunConfig run = load(cfg_path);
  const StudyResult res = convergence_study(run, [&](const StudyRow& r) {
    if (quiet) return;
    std::cerr << r.series << " L=" << r.L << " n_D=" << r.n_D << " #B=" << r.basis_size
              << " rmse_F=" << r.rmse_F << " geo=" << r.geometry_error << " energy=" << r.energy_error
              << " [" << r.status << "]\n";
  });
  std::ostringstream os;
  os << "# " << metadata_json(run, run.training.seed) << '\n';
  write_study_csv(os, res.rows, run.study.record_wall_time);
  write_text(in_output(run, csv), os.str());
  write_text(in_output(run, summary), res.rates_json + "\n");
  std::cout << res.rates_json << '\n';
  return 0;
}

int cmd_check_derivatives(const std::string& cfg_path) {
  RunConfig run;
  if (!cfg_path.empty()) run = load(cfg_path);
  else run = load_run_config(Config::parse(""));
  const BravaisSpec b = BravaisSpec::triangular(run.r0);
  SupercellSpec cell;
  cell.repeat = 5;
  DefectSet defects;
  defects.defects.push_back({DefectKind::Vacancy, Vec2::Zero()});
  auto lat = std::make_shared<const DefectedLattice>(build_lattice(b, cell, defects, run.lattice));
  EnergyAssembler a(lat, make_reference(run), run.assembler);
  const DerivativeCheck c = check_derivatives(a, 10, 0.05, 7);
  auto basis = build_basis(basis_spec(run, base_choice(run)));
  Eigen::VectorXd coeffs(basis->size());
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs[i] = normal(rng) / (1.0 + i);
  EnergyAssembler s(lat, std::make_shared<const SurrogatePotential>(basis, coeffs), run.assembler);
  const DerivativeCheck cs = check_derivatives(s, 3, 0.05, 8);
  json j;
  j["reference"] = {{"force_rel_error", c.force_error}, {"hessian_rel_error", c.hessian_error}};
  j["surrogate"] = {{"force_rel_error", cs.force_error}, {"hessian_rel_error", cs.hessian_error}};
  const bool ok = c.force_error < 1e-6 && c.hessian_error < 1e-5 && cs.force_error < 1e-6 &&
                  cs.hessian_error < 1e-5;
  j["pass"] = ok;
  std::cout << j.dump(2) << '\n';
  return ok ? 0 : 1;
}

void print_error(const Error& e) {
  json j;
  j["error"] = to_string(e.kind());
  j["message"] = e.what();
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalisation study of linear surrogate potentials for lattice defects"};
  app.require_subcommand(0, 1);
  bool top_check = false;
  app.add_flag("--check-derivatives", top_check, "Run the finite-difference derivative suites");
  std::string top_config;
  app.add_option("--config", top_config, "Config file used with --check-derivatives");

  std::string config;
  auto* gen = app.add_subcommand("generate-lattice", "Build the simulation cell and write its sites");
  std::string xyz = "lattice.xyz";
  gen->add_option("--config", config, "Config file")->required();
  gen->add_option("--out", xyz, "XYZ output (relative to output.dir)");

  auto* eqc = app.add_subcommand("equilibrate", "Relax the simulation cell under the reference potential");
  std::string prefix = "equilibrium";
  eqc->add_option("--config", config, "Config file")->required();
  eqc->add_option("--out", prefix, "Output prefix for .json and .csv");

  auto* mts = app.add_subcommand("make-training-set", "Sample perturbed training configurations");
  TrainingFlags tf;
  std::string ts_out = "training.jsonl";
  mts->add_option("--config", config, "Config file")->required();
  mts->add_option("--L", tf.L, "Training domain size in units of r0");
  mts->add_option("--defect", tf.defect, "vacancy or interstitial");
  mts->add_option("--n-train", tf.n_train, "Training samples");
  mts->add_option("--n-test", tf.n_test, "Test samples");
  mts->add_option("--delta", tf.delta, "Perturbation standard deviation in units of r0");
  mts->add_option("--seed", tf.seed, "Seed of the training stream (test uses seed + 1)");
  mts->add_option("--out", ts_out, "JSON-lines output");

  auto* fitc = app.add_subcommand("fit", "Fit the linear surrogate by truncated rank-revealing QR");
  FitFlags ff;
  std::string training = "training.jsonl";
  std::string model_out = "model.json";
  fitc->add_option("--config", config, "Config file")->required();
  fitc->add_option("--training", training, "Training set (JSON lines)");
  fitc->add_option("--basis-order", ff.order, "Correlation order");
  fitc->add_option("--basis-degree", ff.degree, "Maximal total degree");
  fitc->add_option("--we", ff.we, "Energy weight W_E");
  fitc->add_option("--wf", ff.wf, "Force weight W_F");
  fitc->add_option("--rtol", ff.rtol, "Relative pivot threshold");
  fitc->add_option("--out", model_out, "Model JSON output");

  auto* rep = app.add_subcommand("report-matching", "Estimate the matching errors of a fitted model");
  std::string model_path = "model.json";
  rep->add_option("--config", config, "Config file")->required();
  rep->add_option("--training", training, "Training set (JSON lines)");
  rep->add_option("--model", model_path, "Model JSON");

  auto* study = app.add_subcommand("study", "Run the convergence study grid");
  std::string csv = "study.csv";
  std::string summary = "study_rates.json";
  bool quiet = false;
  study->add_option("--config", config, "Config file")->required();
  study->add_option("--out", csv, "CSV output (relative to output.dir)");
  study->add_option("--summary", summary, "Rate summary JSON (relative to output.dir)");
  study->add_flag("--quiet", quiet, "No per-point progress on stderr");

  auto* chk = app.add_subcommand("check-derivatives", "Finite-difference checks of forces and Hessians");
  chk->add_option("--config", config, "Config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (top_check || chk->parsed()) return cmd_check_derivatives(config.empty() ? top_config : config);
    if (gen->parsed()) return cmd_generate_lattice(config, xyz);
    if (eqc->parsed()) return cmd_equilibrate(config, prefix);
    if (mts->parsed()) return cmd_make_training_set(config, tf, ts_out);
    if (fitc->parsed()) return cmd_fit(config, training, ff, model_out);
    if (rep->parsed()) return cmd_report_matching(config, training, model_path);
    if (study->parsed()) return cmd_study(config, csv, summary, quiet);
    std::cout << app.help() << '\n';
    return 0;
  } catch (const Error& e) {
    print_error(e);
    return e.kind() == ErrorKind::ConfigParse ? 2 : 1;
  } catch (const std::exception& e) {
    print_error(Error(ErrorKind::StageFailure, e.what()));
    return 1;
  }
}
