#include "mlipgen/equilibrate.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mlipgen/errors.hpp"

namespace mlipgen {

void MinimizerConfig::validate() const {
  if (!(g_tol > 0)) throw Error(ErrorKind::InvalidArgument, "g_tol must be positive");
  if (max_iterations < 0) throw Error(ErrorKind::InvalidArgument, "max_iterations must be nonnegative");
  if (!(wolfe_c1 > 0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1))
    throw Error(ErrorKind::InvalidArgument, "Wolfe constants need 0 < c1 < c2 < 1");
  if (!(max_step > 0)) throw Error(ErrorKind::InvalidArgument, "max_step must be positive");
}

namespace {

using Vec = Eigen::VectorXd;

Vec flat(const SiteVectors& f) { return Eigen::Map<const Vec>(f.data(), f.size()); }

double max_site_norm(const SiteVectors& f) {
  return f.cols() == 0 ? 0.0 : f.colwise().norm().maxCoeff();
}

class Preconditioner {
 public:
  Preconditioner(const DefectedLattice& lattice, double shift, bool enabled) : enabled_(enabled) {
    if (!enabled_) return;
    StencilLaplacian k(lattice);
    Eigen::SparseMatrix<double> a = k.matrix();
    for (int i = 0; i < a.rows(); ++i) a.coeffRef(i, i) += shift;
    llt_.compute(a);
    if (llt_.info() != Eigen::Success) enabled_ = false;
  }

  Vec apply(const Vec& g) const {
    if (!enabled_) return g;
    const Eigen::Index n = g.size() / 2;
    Eigen::Map<const Eigen::Matrix<double, 2, Eigen::Dynamic>> gm(g.data(), 2, n);
    Eigen::Matrix<double, 2, Eigen::Dynamic> out(2, n);
    out.row(0) = llt_.solve(gm.row(0).transpose()).transpose();
    out.row(1) = llt_.solve(gm.row(1).transpose()).transpose();
    return Eigen::Map<const Vec>(out.data(), out.size());
  }

 private:
  bool enabled_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
};

struct Point {
  double alpha = 0.0;
  double energy = 0.0;
  double slope = 0.0;  // directional derivative along d
  SiteVectors forces;
  bool ok = false;
};

class LineSearch {
 public:
  LineSearch(const EnergyAssembler& a, const Displacement& x, const Vec& d, int& evals)
      : a_(a), x_(x), d_(d), evals_(evals) {}

  Point eval(double alpha) {
    Point p;
    p.alpha = alpha;
    Displacement y = x_;
    Eigen::Map<Vec>(y.data(), y.size()) += alpha * d_;
    ++evals_;
    try {
      p.energy = a_.energy_and_forces(y, p.forces);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InadmissibleConfiguration) throw;
      return p;
    }
    p.slope = -flat(p.forces).dot(d_);
    p.ok = std::isfinite(p.energy);
    return p;
  }

 private:
  const EnergyAssembler& a_;
  const Displacement& x_;
  const Vec& d_;
  int& evals_;
};

// Cubic interpolation minimiser on [a, b] with a bisection safeguard.
double interpolate(const Point& a, const Point& b) {
  const double h = b.alpha - a.alpha;
  const double d1 = a.slope + b.slope - 3.0 * (a.energy - b.energy) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  double t = a.alpha + 0.5 * h;
  if (disc >= 0) {
    const double d2 = std::copysign(std::sqrt(disc), h);
    const double denom = b.slope - a.slope + 2.0 * d2;
    if (denom != 0.0) t = b.alpha - h * (b.slope + d2 - d1) / denom;
  }
  const double lo = std::min(a.alpha, b.alpha);
  const double hi = std::max(a.alpha, b.alpha);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (lo + hi);
  return t;
}

}  // namespace

EquilibriumResult equilibrate(const EnergyAssembler& assembler, const Displacement& u0,
                              const MinimizerConfig& cfg) {
  cfg.validate();
  const DefectedLattice& lat = assembler.lattice();
  assembler.require_admissible(u0);
  Preconditioner prec(lat, cfg.precondition_shift, cfg.precondition);

  EquilibriumResult res;
  res.c_bar = std::numeric_limits<double>::quiet_NaN();
  Displacement x = u0;
  SiteVectors f;
  double e = assembler.energy_and_forces(x, f);
  res.evaluations = 1;
  Vec g = -flat(f);
  Vec z = prec.apply(g);
  Vec d = -z;
  double alpha_prev = 1.0;
  double slope_prev = 0.0;
  bool restarted = true;
  const double max_step = cfg.max_step * lat.r0();

  int it = 0;
  for (; it <= cfg.max_iterations; ++it) {
    if (max_site_norm(f) <= cfg.g_tol) {
      res.converged = true;
      break;
    }
    if (it == cfg.max_iterations) break;
    double slope0 = g.dot(d);
    if (!(slope0 < 0)) {
      d = -z;
      slope0 = g.dot(d);
      restarted = true;
    }
    const double dmax =
        Eigen::Map<const Eigen::Matrix2Xd>(d.data(), 2, d.size() / 2).colwise().norm().maxCoeff();
    const double alpha_max = max_step / dmax;
    double alpha = restarted && it == 0 ? 1.0 : alpha_prev * slope_prev / slope0;
    if (!(alpha > 0) || !std::isfinite(alpha)) alpha = 1.0;
    alpha = std::min(alpha, alpha_max);

    // Strong Wolfe search; energies within eps of each other are treated as
    // equal so that the search still terminates at round-off level.
    const double eps = 1e-11 * std::max(1.0, std::abs(e));
    LineSearch ls(assembler, x, d, res.evaluations);
    Point p0;
    p0.alpha = 0.0;
    p0.energy = e;
    p0.slope = slope0;
    p0.ok = true;
    auto armijo = [&](const Point& p) {
      return p.energy <= e + cfg.wolfe_c1 * p.alpha * slope0 + eps;
    };
    auto curvature = [&](const Point& p) { return std::abs(p.slope) <= -cfg.wolfe_c2 * slope0; };

    Point accepted;
    Point prev = p0;
    bool found = false;
    for (int k = 0; k < 60 && !found; ++k) {
      Point p = ls.eval(alpha);
      if (!p.ok) {
        alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
        continue;
      }
      Point lo, hi;
      bool zoom = false;
      if (!armijo(p) || (k > 0 && p.energy >= prev.energy + eps)) {
        lo = prev;
        hi = p;
        zoom = true;
      } else if (curvature(p)) {
        accepted = p;
        found = true;
        break;
      } else if (p.slope >= 0) {
        lo = p;
        hi = prev;
        zoom = true;
      } else if (alpha >= alpha_max) {
        accepted = p;  // capped step with sufficient decrease
        found = true;
        break;
      }
      if (zoom) {
        for (int z_it = 0; z_it < 60; ++z_it) {
          const double t = interpolate(lo, hi);
          Point q = ls.eval(t);
          if (!q.ok) {
            hi = q;
            hi.energy = std::numeric_limits<double>::infinity();
            hi.slope = 0.0;
            continue;
          }
          if (!armijo(q) || q.energy >= lo.energy + eps) {
            hi = q;
          } else {
            if (curvature(q)) {
              accepted = q;
              found = true;
              break;
            }
            if (q.slope * (hi.alpha - lo.alpha) >= 0) hi = lo;
            lo = q;
          }
          if (std::abs(hi.alpha - lo.alpha) <= 1e-14 * std::max(1.0, lo.alpha)) break;
        }
        if (!found && lo.alpha > 0 && lo.energy <= e + eps) {
          accepted = lo;
          found = true;
        }
        break;
      }
      prev = p;
      alpha = std::min(2.0 * alpha, alpha_max);
    }

    if (!found) {
      if (restarted) {
        res.u = x;
        res.energy = e;
        res.residual_force_norm = max_site_norm(f);
        res.iterations = it;
        bool admissible_failure = true;
        for (double t : {1e-6, 1e-9}) {
          if (ls.eval(t).ok) admissible_failure = false;
        }
        if (admissible_failure)
          throw Error(ErrorKind::LeftAdmissibleSet, "line search cannot stay in the admissible set");
        throw Error(ErrorKind::NotConverged,
                    "line search failed at residual " + std::to_string(res.residual_force_norm));
      }
      d = -z;
      restarted = true;
      continue;
    }

    Eigen::Map<Vec>(x.data(), x.size()) += accepted.alpha * d;
    e = accepted.energy;
    f = accepted.forces;
    const Vec g_new = -flat(f);
    const Vec z_new = prec.apply(g_new);
    const double beta = std::max(0.0, g_new.dot(z_new - z) / g.dot(z));
    d = -z_new + beta * d;
    alpha_prev = accepted.alpha;
    slope_prev = slope0;
    g = g_new;
    z = z_new;
    restarted = beta == 0.0;
  }
  res.u = x;
  res.energy = e;
  res.residual_force_norm = max_site_norm(f);
  res.iterations = it;
  if (!res.converged)
    throw Error(ErrorKind::NotConverged,
                "no convergence after " + std::to_string(it) + " iterations, residual " +
                    std::to_string(res.residual_force_norm));
  return res;
}

namespace {

void project_translations(Vec& v) {
  const Eigen::Index n = v.size() / 2;
  Eigen::Map<Eigen::Matrix2Xd> m(v.data(), 2, n);
  const Vec2 mean = m.rowwise().mean();
  m.colwise() -= mean;
}

double gershgorin_lower(const Eigen::SparseMatrix<double>& h) {
  Vec diag = Vec::Zero(h.rows());
  Vec off = Vec::Zero(h.rows());
  for (int k = 0; k < h.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(h, k); it; ++it) {
      if (it.row() == it.col())
        diag[it.row()] += it.value();
      else
        off[it.row()] += std::abs(it.value());
    }
  return (diag - off).minCoeff();
}

double rayleigh(const Eigen::SparseMatrix<double>& h, const Vec& v) {
  return v.dot(h * v) / v.squaredNorm();
}

template <class Solve>
double inverse_iteration(const Eigen::SparseMatrix<double>& h, Solve solve) {
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> normal;
  Vec v(h.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  project_translations(v);
  v.normalize();
  double lambda = rayleigh(h, v);
  for (int it = 0; it < 3000; ++it) {
    Vec x = solve(v);
    project_translations(x);
    const double nx = x.norm();
    if (!std::isfinite(nx) || nx == 0.0)
      throw Error(ErrorKind::EigensolverFailed, "inverse iteration broke down");
    v = x / nx;
    const double next = rayleigh(h, v);
    const bool done = std::abs(next - lambda) <= 1e-11 * std::abs(next);
    lambda = next;
    if (done && it > 3) break;
  }
  return lambda;
}

}  // namespace

double smallest_nontranslation_eigenvalue(const Eigen::SparseMatrix<double>& h) {
  const Eigen::Index m = h.rows();
  if (m != h.cols() || m % 2 != 0 || m < 4)
    throw Error(ErrorKind::DimensionMismatch, "Hessian must be square with 2 x n >= 4 rows");
  const Eigen::Index n = m / 2;
  if (m <= 600) {
    Eigen::MatrixXd dense(h);
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      t(2 * i, 0) = 1.0 / std::sqrt(double(n));
      t(2 * i + 1, 1) = 1.0 / std::sqrt(double(n));
    }
    const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(m, m) - t * t.transpose();
    const double shift = 10.0 * (dense.cwiseAbs().rowwise().sum().maxCoeff() + 1.0);
    Eigen::MatrixXd a = p * dense * p + shift * t * t.transpose();
    a = 0.5 * (a + a.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::EigensolverFailed, "dense eigensolver failed");
    return es.eigenvalues()[0];
  }

  // Pin atom 0: positive definiteness of the pinned block is equivalent to
  // positivity on the complement of translations.
  Eigen::SparseMatrix<double> pinned = h.bottomRightCorner(m - 2, m - 2);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(pinned);
  const bool positive =
      ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0).all();
  if (positive) {
    return inverse_iteration(h, [&](const Vec& v) {
      Vec x = Vec::Zero(m);
      x.tail(m - 2) = ldlt.solve(v.tail(m - 2));
      return x;
    });
  }
  const double sigma = gershgorin_lower(h) - 1e-3 * (1.0 + std::abs(gershgorin_lower(h)));
  Eigen::SparseMatrix<double> shifted = h;
  for (Eigen::Index i = 0; i < m; ++i) shifted.coeffRef(i, i) -= sigma;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> shifted_ldlt(shifted);
  if (shifted_ldlt.info() != Eigen::Success)
    throw Error(ErrorKind::EigensolverFailed, "shifted factorisation failed");
  return inverse_iteration(h, [&](const Vec& v) { return Vec(shifted_ldlt.solve(v)); });
}

double check_stability(const EnergyAssembler& assembler, const Displacement& u) {
  return smallest_nontranslation_eigenvalue(assembler.hessian(u));
}

double truncation_profile(double x) {
  constexpr double inner = 4.0 / 6.0;
  constexpr double outer = 5.0 / 6.0;
  if (x <= inner) return 1.0;
  if (x >= outer) return 0.0;
  const double s = (x - inner) / (outer - inner);
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

Vec2 annulus_average(const DefectedLattice& lattice, const Displacement& u,
                     const TruncationOperator& op) {
  Vec2 sum = Vec2::Zero();
  int count = 0;
  for (int i = 0; i < lattice.size(); ++i) {
    const double r = lattice.minimum_image(lattice.position(i) - op.center).norm() / op.radius;
    if (r >= 4.0 / 6.0 && r <= 5.0 / 6.0) {
      sum += u.col(i);
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::EmptyAnnulus, "no sites in the truncation annulus");
  return sum / count;
}

Displacement truncate(const DefectedLattice& lattice, const Displacement& u,
                      const TruncationOperator& op) {
  if (!(op.radius > 0)) throw Error(ErrorKind::InvalidArgument, "truncation radius must be positive");
  if (u.cols() != lattice.size()) throw Error(ErrorKind::DimensionMismatch, "field size does not match lattice");
  const Vec2 a = annulus_average(lattice, u, op);
  Displacement out = Displacement::Zero(2, lattice.size());
  for (int i = 0; i < lattice.size(); ++i) {
    const double r = lattice.minimum_image(lattice.position(i) - op.center).norm() / op.radius;
    const double eta = truncation_profile(r);
    if (eta > 0.0) out.col(i) = eta * (u.col(i) - a);
  }
  return out;
}

Displacement build_predictor(const DefectedLattice& target,
                             const std::map<DefectKind, CoreSolution>& cores, double radius) {
  Displacement z = Displacement::Zero(2, target.size());
  const double reach = 5.0 / 6.0 * radius;
  const double tol = 1e-6 * target.r0();
  std::map<DefectKind, Displacement> truncated;
  for (const auto& defect : target.defects().defects) {
    auto it = cores.find(defect.kind);
    if (it == cores.end())
      throw Error(ErrorKind::InvalidArgument,
                  std::string("no core solution for defect kind ") + to_string(defect.kind));
    const CoreSolution& core = it->second;
    if (core.lattice->domain_radius() < reach)
      throw Error(ErrorKind::CoreDomainTooSmall, "core domain does not cover the truncation ball");
    auto [tr, inserted] = truncated.try_emplace(defect.kind);
    if (inserted) tr->second = truncate(*core.lattice, core.u, {core.center, radius});
    const Displacement& pu = tr->second;
    for (int l = 0; l < target.size(); ++l) {
      const Vec2 d = target.minimum_image(target.position(l) - defect.position);
      if (d.norm() >= reach) continue;
      const auto site = core.lattice->find_site(core.lattice->wrap(core.center + d), tol);
      if (!site)
        throw Error(ErrorKind::LatticeMismatch, "target site has no counterpart in the core domain");
      z.col(l) += pu.col(*site);
    }
  }
  return z;
}

std::vector<std::pair<double, double>> shell_maxima(const DefectedLattice& lattice,
                                                    const Displacement& u, const Vec2& center) {
  std::map<int, std::pair<double, double>> bins;  // bin -> (distance, max norm)
  for (int i = 0; i < lattice.size(); ++i) {
    const double r = lattice.minimum_image(lattice.position(i) - center).norm();
    const int b = static_cast<int>(std::floor(r / lattice.r0()));
    const double s = stencil_norm(lattice, u, i);
    auto [it, inserted] = bins.try_emplace(b, r, s);
    if (!inserted && s > it->second.second) it->second = {r, s};
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [b, v] : bins) out.push_back(v);
  return out;
}

RateFit check_decay(const DefectedLattice& lattice, const Displacement& u, const Vec2& center) {
  const double lo = 5.0 * lattice.r0();
  const double hi = 0.4 * lattice.domain_radius();
  std::vector<std::pair<double, double>> pts;
  for (const auto& [r, s] : shell_maxima(lattice, u, center))
    if (r >= lo && r <= hi && s > 0.0) pts.emplace_back(r, s);
  if (pts.size() < 3) throw Error(ErrorKind::InsufficientShells, "fewer than three nonzero shells in the fit window");
  return fit_rate(pts);
}

}  // namespace mlipgen
