#include "mlipgen/training.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mlipgen/errors.hpp"

namespace mlipgen {

Vec2 defect_position(const BravaisSpec& bravais, DefectKind kind, int i, int j) {
  const Vec2 base = bravais.cell * Vec2(i, j);
  if (kind == DefectKind::Vacancy) return base;
  // centroid of the triangle spanned by the lattice point and its two primitive neighbours
  return base + bravais.cell * Vec2(1.0 / 3.0, 1.0 / 3.0);
}

TrainingDomain make_training_domain(int L, DefectKind kind,
                                    std::shared_ptr<const SitePotential> reference, double r0,
                                    const MinimizerConfig& minimizer,
                                    const LatticeOptions& lattice_options,
                                    const AssemblerOptions& assembler_options) {
  if (L < 4) throw Error(ErrorKind::InvalidArgument, "training domain needs L >= 4");
  const BravaisSpec bravais = BravaisSpec::triangular(r0);
  SupercellSpec cell;
  cell.repeat = L;
  DefectSet defects;
  defects.defects.push_back({kind, defect_position(bravais, kind, 0, 0)});
  auto lattice = std::make_shared<const DefectedLattice>(
      build_lattice(bravais, cell, defects, lattice_options));
  EnergyAssembler assembler(lattice, std::move(reference), assembler_options);
  const EquilibriumResult eq =
      equilibrate(assembler, Displacement::Zero(2, lattice->size()), minimizer);
  TrainingDomain domain;
  domain.L = L;
  domain.kind = kind;
  domain.lattice = lattice;
  domain.u_bar = eq.u;
  domain.energy = eq.energy;
  domain.c_bar = check_stability(assembler, eq.u);
  if (!(domain.c_bar > 0))
    throw Error(ErrorKind::UnstableTrainingEquilibrium,
                "training equilibrium is not strongly stable (c_bar = " +
                    std::to_string(domain.c_bar) + ")");
  return domain;
}

std::vector<Observation> sample_configs(const TrainingDomain& domain,
                                        const EnergyAssembler& reference, int n, double delta,
                                        std::uint64_t seed, bool test) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
  if (!(delta >= 0)) throw Error(ErrorKind::InvalidArgument, "delta must be nonnegative");
  if (&reference.lattice() != domain.lattice.get())
    throw Error(ErrorKind::LatticeMismatch, "reference assembler is built on a different lattice");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = delta * domain.lattice->r0();
  std::vector<Observation> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    Observation obs;
    obs.test = test;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      obs.u = domain.u_bar;
      for (Eigen::Index i = 0; i < obs.u.size(); ++i) obs.u.data()[i] += sigma * normal(rng);
      try {
        obs.energy = reference.energy_and_forces(obs.u, obs.forces);
        ok = true;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::InadmissibleConfiguration) throw;
      }
    }
    if (!ok) throw Error(ErrorKind::InadmissibleSample, "100 consecutive samples were inadmissible");
    out.push_back(std::move(obs));
  }
  return out;
}

namespace {

Eigen::SparseMatrix<double> component_laplacian(const DefectedLattice& lattice) {
  StencilLaplacian k(lattice);
  std::vector<Eigen::Triplet<double>> trips;
  for (int c = 0; c < k.matrix().outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(k.matrix(), c); it; ++it) {
      trips.emplace_back(2 * it.row(), 2 * it.col(), it.value());
      trips.emplace_back(2 * it.row() + 1, 2 * it.col() + 1, it.value());
    }
  Eigen::SparseMatrix<double> out(2 * lattice.size(), 2 * lattice.size());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace

double force_constant_error(const DefectedLattice& lattice, const Eigen::SparseMatrix<double>& dh) {
  const Eigen::Index m = 2 * static_cast<Eigen::Index>(lattice.size());
  if (dh.rows() != m || dh.cols() != m)
    throw Error(ErrorKind::DimensionMismatch, "Hessian size does not match lattice");
  const Eigen::Index n = lattice.size();
  if (m <= 1200) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      t(2 * i, 0) = 1.0;
      t(2 * i + 1, 1) = 1.0;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(t);
    const Eigen::MatrixXd q = Eigen::MatrixXd(qr.householderQ()).rightCols(m - 2);
    const Eigen::MatrixXd k = Eigen::MatrixXd(component_laplacian(lattice));
    Eigen::MatrixXd a = q.transpose() * Eigen::MatrixXd(dh) * q;
    Eigen::MatrixXd b = q.transpose() * k * q;
    a = 0.5 * (a + a.transpose()).eval();
    b = 0.5 * (b + b.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      throw Error(ErrorKind::EigensolverFailed, "generalised eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

  StencilLaplacian k(lattice);
  const Eigen::SparseMatrix<double> k2 = component_laplacian(lattice);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  SiteVectors x(2, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), x.size());
    const Eigen::VectorXd hx = dh * xv;
    const double num = xv.dot(hx);
    const double den = xv.dot(k2 * xv);
    const double next = std::abs(num / den);
    SiteVectors hxm = Eigen::Map<const SiteVectors>(hx.data(), 2, n);
    SiteVectors y = k.solve(hxm);
    const double ny = std::sqrt(Eigen::Map<const Eigen::VectorXd>(y.data(), y.size()).dot(
        k2 * Eigen::Map<const Eigen::VectorXd>(y.data(), y.size())));
    if (ny == 0.0) return 0.0;
    x = y / ny;
    if (it > 5 && std::abs(next - lambda) <= 1e-6 * next) return std::max(next, lambda);
    lambda = next;
  }
  throw Error(ErrorKind::PowerIterationNotConverged, "force-constant power iteration did not converge");
}

MatchingReport matching_report(const TrainingDomain& domain, const EnergyAssembler& reference,
                               const std::vector<Observation>& samples,
                               std::shared_ptr<const SitePotential> model,
                               const LatticeOptions& lattice_options,
                               const AssemblerOptions& assembler_options) {
  if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "matching report needs samples");
  EnergyAssembler surrogate(domain.lattice, model, assembler_options);
  const double n_sites = domain.lattice->size();
  MatchingReport rep;
  double se = 0.0, sf = 0.0;
  long ne = 0, nf = 0;
  bool have_test = false;
  for (const auto& o : samples) have_test = have_test || o.test;
  for (const auto& o : samples) {
    SiteVectors f;
    const double e = surrogate.energy_and_forces(o.u, f);
    const double de = std::abs(e - o.energy);
    const SiteVectors df = f - o.forces;
    rep.eps_E = std::max(rep.eps_E, de);
    rep.eps_F = std::max(rep.eps_F, df.norm());
    if (o.test == have_test) {
      se += (de / n_sites) * (de / n_sites);
      sf += df.squaredNorm();
      ++ne;
      nf += df.size();
    }
  }
  rep.rmse_E = std::sqrt(se / static_cast<double>(ne));
  rep.rmse_F = std::sqrt(sf / static_cast<double>(nf));

  const Eigen::SparseMatrix<double> dh =
      reference.hessian(domain.u_bar) - surrogate.hessian(domain.u_bar);
  rep.eps_FC = force_constant_error(*domain.lattice, dh);

  SupercellSpec cell;
  cell.repeat = domain.L;
  auto hom = std::make_shared<const DefectedLattice>(
      build_lattice(domain.lattice->bravais(), cell, DefectSet{}, lattice_options));
  EnergyAssembler ref_hom(hom, reference.potential_ptr(), assembler_options);
  EnergyAssembler sur_hom(hom, model, assembler_options);
  const Displacement zero = Displacement::Zero(2, hom->size());
  const Eigen::SparseMatrix<double> h_ref = ref_hom.hessian(zero);
  rep.eps_FC_hom = force_constant_error(*hom, h_ref - sur_hom.hessian(zero));
  const double scale = force_constant_error(*hom, h_ref);
  rep.eps_FC_hom_rel = scale > 0 ? rep.eps_FC_hom / scale : 0.0;
  return rep;
}

void write_training_set(const std::string& jsonl_path, const std::string& csv_path,
                        const TrainingDomain& domain, const std::vector<Observation>& obs,
                        const std::string& metadata_json) {
  std::ofstream csv(csv_path);
  if (!csv) throw Error(ErrorKind::StageFailure, "cannot write " + csv_path);
  csv << std::setprecision(17);
  csv << "# " << metadata_json << '\n';
  csv << "sample,site,ux,uy\n";
  for (std::size_t s = 0; s < obs.size(); ++s)
    for (Eigen::Index i = 0; i < obs[s].u.cols(); ++i)
      csv << s << ',' << i << ',' << obs[s].u(0, i) << ',' << obs[s].u(1, i) << '\n';

  std::ofstream out(jsonl_path);
  if (!out) throw Error(ErrorKind::StageFailure, "cannot write " + jsonl_path);
  nlohmann::json header;
  header["metadata"] = nlohmann::json::parse(metadata_json);
  header["L"] = domain.L;
  header["defect"] = to_string(domain.kind);
  header["sites"] = domain.lattice->size();
  header["configurations"] = csv_path;
  out << header.dump() << '\n';
  for (std::size_t s = 0; s < obs.size(); ++s) {
    nlohmann::json rec;
    rec["sample"] = s;
    rec["configuration"] = csv_path + "#" + std::to_string(s);
    rec["energy"] = obs[s].energy;
    rec["forces"] = std::vector<double>(obs[s].forces.data(), obs[s].forces.data() + obs[s].forces.size());
    rec["tag"] = obs[s].test ? "test" : "train";
    out << rec.dump() << '\n';
  }
}

std::vector<Observation> read_training_set(const std::string& jsonl_path, int sites) {
  std::ifstream in(jsonl_path);
  if (!in) throw Error(ErrorKind::StageFailure, "cannot read " + jsonl_path);
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  if (header.at("sites").get<int>() != sites)
    throw Error(ErrorKind::LatticeMismatch, "training set was made on a different lattice");
  const std::string csv_path = header.at("configurations").get<std::string>();
  std::vector<Observation> obs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    Observation o;
    o.energy = rec.at("energy").get<double>();
    const auto f = rec.at("forces").get<std::vector<double>>();
    if (static_cast<int>(f.size()) != 2 * sites)
      throw Error(ErrorKind::DimensionMismatch, "force record has the wrong length");
    o.forces = Eigen::Map<const SiteVectors>(f.data(), 2, sites);
    o.test = rec.at("tag").get<std::string>() == "test";
    o.u = Displacement::Zero(2, sites);
    obs.push_back(std::move(o));
  }
  std::ifstream csv(csv_path);
  if (!csv) throw Error(ErrorKind::StageFailure, "cannot read " + csv_path);
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("sample", 0) == 0) continue;
    std::istringstream ss(line);
    std::string a, b, c, d;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    std::getline(ss, d, ',');
    const std::size_t s = std::stoul(a);
    const int i = std::stoi(b);
    if (s >= obs.size() || i < 0 || i >= sites)
      throw Error(ErrorKind::DimensionMismatch, "configuration CSV does not match the records");
    obs[s].u(0, i) = std::stod(c);
    obs[s].u(1, i) = std::stod(d);
  }
  return obs;
}

}  // namespace mlipgen
