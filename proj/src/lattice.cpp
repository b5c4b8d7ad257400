#include "mlipgen/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "mlipgen/errors.hpp"

namespace mlipgen {

namespace {

constexpr double kPosTol = 1e-8;

// Fractional coordinates relative to the supercell, wrapped into [0, 1).
Vec2 frac01(const Mat2& inv, const Vec2& x) {
  Vec2 f = inv * x;
  for (int a = 0; a < 2; ++a) {
    f[a] -= std::floor(f[a]);
    if (f[a] >= 1.0) f[a] -= 1.0;
  }
  return f;
}

double perpendicular_width(const Mat2& s, int axis) {
  const double area = std::abs(s.determinant());
  return area / s.col(1 - axis).norm();
}

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Witness test for the Voronoi nearest-neighbour relation: is there a point on
// the bisector of 0 and rho_m that is no farther from 0 than from any blocker?
bool voronoi_adjacent(const Vec2& rho_m, std::span<const Neighbor> blockers, double bound,
                      double tol) {
  const Vec2 mid = 0.5 * rho_m;
  const Vec2 dir(-rho_m.y() / rho_m.norm(), rho_m.x() / rho_m.norm());
  double lo = -bound;
  double hi = bound;
  for (const auto& nb : blockers) {
    const Vec2& rk = nb.offset;
    if ((rk - rho_m).norm() < kPosTol) continue;
    // 2 a.rk <= |rk|^2 with a = mid + t dir
    const double coef = 2.0 * dir.dot(rk);
    const double rhs = rk.squaredNorm() - 2.0 * mid.dot(rk);
    if (std::abs(coef) < 1e-14) {
      if (rhs < -tol) return false;
    } else if (coef > 0) {
      hi = std::min(hi, (rhs + tol) / coef);
    } else {
      lo = std::max(lo, (rhs + tol) / coef);
    }
    if (lo > hi) return false;
  }
  return lo <= hi;
}

}  // namespace

const char* to_string(DefectKind kind) noexcept {
  return kind == DefectKind::Vacancy ? "vacancy" : "interstitial";
}

DefectKind defect_kind_from_string(const std::string& name) {
  if (name == "vacancy" || name == "vac") return DefectKind::Vacancy;
  if (name == "interstitial" || name == "int") return DefectKind::Interstitial;
  throw Error(ErrorKind::InvalidDefect, "unknown defect kind '" + name + "'");
}

BravaisSpec BravaisSpec::triangular(double r0) {
  BravaisSpec spec;
  spec.r0 = r0;
  spec.cell << r0, 0.5 * r0, 0.0, 0.5 * std::sqrt(3.0) * r0;
  return spec;
}

void BravaisSpec::validate() const {
  if (dimension != 2) throw Error(ErrorKind::InvalidArgument, "only d = 2 is supported");
  if (!(r0 > 0)) throw Error(ErrorKind::InvalidArgument, "r0 must be positive");
  if (std::abs(cell.determinant()) < 1e-12 * r0 * r0)
    throw Error(ErrorKind::SingularCell, "Bravais cell matrix is singular");
}

std::span<const Neighbor> DefectedLattice::nearest(int i) const {
  const auto b = static_cast<std::size_t>(nn_start_[static_cast<std::size_t>(i)]);
  const auto e = static_cast<std::size_t>(nn_start_[static_cast<std::size_t>(i) + 1]);
  return {nn_.data() + b, e - b};
}

std::span<const Neighbor> DefectedLattice::interactions(int i) const {
  const auto b = static_cast<std::size_t>(int_start_[static_cast<std::size_t>(i)]);
  const auto e = static_cast<std::size_t>(int_start_[static_cast<std::size_t>(i) + 1]);
  return {int_.data() + b, e - b};
}

std::span<const SlotRef> DefectedLattice::referrers(int atom) const {
  const auto b = static_cast<std::size_t>(ref_start_[static_cast<std::size_t>(atom)]);
  const auto e = static_cast<std::size_t>(ref_start_[static_cast<std::size_t>(atom) + 1]);
  return {ref_.data() + b, e - b};
}

Vec2 DefectedLattice::minimum_image(const Vec2& d) const {
  Vec2 f = supercell_inv_ * d;
  f[0] -= std::round(f[0]);
  f[1] -= std::round(f[1]);
  Vec2 best = supercell_ * f;
  // Skewed cells: the rounded representative may not be the shortest one.
  for (int a = -1; a <= 1; ++a) {
    for (int b = -1; b <= 1; ++b) {
      const Vec2 c = supercell_ * Vec2(f[0] + a, f[1] + b);
      if (c.squaredNorm() < best.squaredNorm() - 1e-14) best = c;
    }
  }
  return best;
}

Vec2 DefectedLattice::wrap(const Vec2& x) const {
  Vec2 f = supercell_inv_ * x;
  for (int a = 0; a < 2; ++a) {
    // half-open interval (-1/2, 1/2]
    f[a] -= std::ceil(f[a] - 0.5 - 1e-12);
  }
  return supercell_ * f;
}

std::optional<int> DefectedLattice::find_site(const Vec2& x, double tol) const {
  const Vec2 f = frac01(supercell_inv_, x);
  const int c0 = std::min(bins0_ - 1, static_cast<int>(f[0] * bins0_));
  const int c1 = std::min(bins1_ - 1, static_cast<int>(f[1] * bins1_));
  for (int d0 = -1; d0 <= 1; ++d0) {
    for (int d1 = -1; d1 <= 1; ++d1) {
      const int b0 = ((c0 + d0) % bins0_ + bins0_) % bins0_;
      const int b1 = ((c1 + d1) % bins1_ + bins1_) % bins1_;
      const auto bin = static_cast<std::size_t>(b0 * bins1_ + b1);
      for (int k = bin_start_[bin]; k < bin_start_[bin + 1]; ++k) {
        const int s = bin_sites_[static_cast<std::size_t>(k)];
        if (minimum_image(position(s) - x).norm() <= tol) return s;
      }
    }
  }
  return std::nullopt;
}

double DefectedLattice::domain_radius() const {
  return 0.5 * std::min(supercell_.col(0).norm(), supercell_.col(1).norm());
}

DefectedLattice build_lattice(const BravaisSpec& bravais, const SupercellSpec& cell,
                              const DefectSet& defects, const LatticeOptions& options) {
  bravais.validate();
  if (cell.repeat < 1) throw Error(ErrorKind::InvalidArgument, "supercell repeat must be >= 1");
  const int det_m = cell.multiples.determinant();
  if (det_m == 0) throw Error(ErrorKind::SingularCell, "supercell vectors are linearly dependent");

  DefectedLattice lat;
  lat.bravais_ = bravais;
  lat.cell_spec_ = cell;
  lat.defects_ = defects;
  lat.supercell_ = static_cast<double>(cell.repeat) * bravais.cell * cell.multiples.cast<double>();
  lat.supercell_inv_ = lat.supercell_.inverse();
  const double r0 = bravais.r0;

  // Lattice points A z with (N M)^{-1} z in (-1/2, 1/2]^2, tested in integers:
  // -N|det| < 2 sign(det) adj(M) z <= N|det|.
  const Eigen::Matrix2i& m = cell.multiples;
  Eigen::Matrix2i adj;
  adj << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  const int sgn = det_m > 0 ? 1 : -1;
  const long bound = static_cast<long>(cell.repeat) * std::abs(det_m);
  const int zmax = cell.repeat * (std::abs(m(0, 0)) + std::abs(m(0, 1)) + std::abs(m(1, 0)) +
                                  std::abs(m(1, 1))) / 2 + 2;
  std::vector<Vec2> host;
  for (int z1 = -zmax; z1 <= zmax; ++z1) {
    for (int z0 = -zmax; z0 <= zmax; ++z0) {
      const Eigen::Vector2i z(z0, z1);
      const Eigen::Vector2i t = sgn * 2 * (adj * z);
      bool inside = true;
      for (int a = 0; a < 2; ++a) inside = inside && (t[a] > -bound) && (t[a] <= bound);
      if (inside) host.push_back(bravais.cell * z.cast<double>());
    }
  }

  auto inside_cell = [&](const Vec2& p) {
    const Vec2 f = lat.supercell_inv_ * p;
    return f[0] > -0.5 - 1e-9 && f[0] <= 0.5 + 1e-9 && f[1] > -0.5 - 1e-9 && f[1] <= 0.5 + 1e-9;
  };

  std::vector<bool> removed(host.size(), false);
  std::vector<Vec2> inserted;
  for (const auto& d : defects.defects) {
    if (!inside_cell(d.position))
      throw Error(ErrorKind::DefectOutsideCell, "defect position lies outside the cell");
    if (d.kind == DefectKind::Vacancy) {
      bool found = false;
      for (std::size_t s = 0; s < host.size(); ++s) {
        if (!removed[s] && (host[s] - d.position).norm() < 1e-6 * r0) {
          removed[s] = true;
          found = true;
          break;
        }
      }
      if (!found) throw Error(ErrorKind::InvalidDefect, "vacancy position is not a lattice site");
    } else {
      for (const auto& h : host) {
        Vec2 diff = h - d.position;
        Vec2 f = lat.supercell_inv_ * diff;
        f[0] -= std::round(f[0]);
        f[1] -= std::round(f[1]);
        diff = lat.supercell_ * f;
        if (diff.norm() < 0.3 * r0)
          throw Error(ErrorKind::InvalidDefect, "interstitial closer than 0.3 r0 to a lattice site");
      }
      inserted.push_back(d.position);
    }
  }
  for (std::size_t s = 0; s < host.size(); ++s)
    if (!removed[s]) lat.positions_.push_back(host[s]);
  for (const auto& p : inserted) lat.positions_.push_back(p);
  const int n = lat.size();
  if (n == 0) throw Error(ErrorKind::InvalidDefect, "no sites left");

  for (int i = 0; i < defects.count(); ++i) {
    for (int j = i + 1; j < defects.count(); ++j) {
      const Vec2 d = lat.minimum_image(defects.defects[static_cast<std::size_t>(i)].position -
                                       defects.defects[static_cast<std::size_t>(j)].position);
      if (d.norm() < 2.0 * defects.core_radius)
        throw Error(ErrorKind::OverlappingDefects, "defect cores overlap");
    }
  }

  // Spatial bins in fractional coordinates.
  const double radius = std::max(options.interaction_radius, options.nn_candidate_radius) * r0;
  lat.interaction_radius_ = options.interaction_radius * r0;
  const double w0 = perpendicular_width(lat.supercell_, 0);
  const double w1 = perpendicular_width(lat.supercell_, 1);
  lat.bins0_ = std::max(1, static_cast<int>(w0 / radius));
  lat.bins1_ = std::max(1, static_cast<int>(w1 / radius));
  std::vector<Vec2> frac(static_cast<std::size_t>(n));
  std::vector<int> bin_of(static_cast<std::size_t>(n));
  lat.bin_start_.assign(static_cast<std::size_t>(lat.bins0_ * lat.bins1_) + 1, 0);
  for (int i = 0; i < n; ++i) {
    const Vec2 f = frac01(lat.supercell_inv_, lat.position(i));
    frac[static_cast<std::size_t>(i)] = f;
    const int b0 = std::min(lat.bins0_ - 1, static_cast<int>(f[0] * lat.bins0_));
    const int b1 = std::min(lat.bins1_ - 1, static_cast<int>(f[1] * lat.bins1_));
    bin_of[static_cast<std::size_t>(i)] = b0 * lat.bins1_ + b1;
    ++lat.bin_start_[static_cast<std::size_t>(b0 * lat.bins1_ + b1) + 1];
  }
  for (std::size_t b = 1; b < lat.bin_start_.size(); ++b) lat.bin_start_[b] += lat.bin_start_[b - 1];
  lat.bin_sites_.assign(static_cast<std::size_t>(n), 0);
  {
    std::vector<int> fill(lat.bin_start_.begin(), lat.bin_start_.end() - 1);
    for (int i = 0; i < n; ++i)
      lat.bin_sites_[static_cast<std::size_t>(fill[static_cast<std::size_t>(bin_of[static_cast<std::size_t>(i)])]++)] = i;
  }

  // Interaction lists over all periodic images within the search radius.
  const int reach0 = static_cast<int>(std::ceil(radius / (w0 / lat.bins0_))) + 1;
  const int reach1 = static_cast<int>(std::ceil(radius / (w1 / lat.bins1_))) + 1;
  std::vector<std::vector<Neighbor>> within(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Vec2 fi = frac[static_cast<std::size_t>(i)];
    const int c0 = bin_of[static_cast<std::size_t>(i)] / lat.bins1_;
    const int c1 = bin_of[static_cast<std::size_t>(i)] % lat.bins1_;
    auto& out = within[static_cast<std::size_t>(i)];
    for (int d0 = -reach0; d0 <= reach0; ++d0) {
      const int t0 = c0 + d0;
      const int s0 = floor_div(t0, lat.bins0_);
      const int b0 = t0 - s0 * lat.bins0_;
      for (int d1 = -reach1; d1 <= reach1; ++d1) {
        const int t1 = c1 + d1;
        const int s1 = floor_div(t1, lat.bins1_);
        const int b1 = t1 - s1 * lat.bins1_;
        const auto bin = static_cast<std::size_t>(b0 * lat.bins1_ + b1);
        for (int k = lat.bin_start_[bin]; k < lat.bin_start_[bin + 1]; ++k) {
          const int j = lat.bin_sites_[static_cast<std::size_t>(k)];
          if (j == i && s0 == 0 && s1 == 0) continue;
          const Vec2 df = frac[static_cast<std::size_t>(j)] + Vec2(s0, s1) - fi;
          const Vec2 rho = lat.supercell_ * df;
          if (rho.norm() <= radius + kPosTol * r0) out.push_back({j, rho});
        }
      }
    }
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
      const double ra = a.offset.squaredNorm();
      const double rb = b.offset.squaredNorm();
      if (std::abs(ra - rb) > 1e-12) return ra < rb;
      if (a.index != b.index) return a.index < b.index;
      if (std::abs(a.offset.x() - b.offset.x()) > 1e-12) return a.offset.x() < b.offset.x();
      return a.offset.y() < b.offset.y();
    });
  }

  const double r_int = lat.interaction_radius_ + kPosTol * r0;
  const double r_nn = options.nn_candidate_radius * r0 + kPosTol * r0;
  lat.int_start_.assign(1, 0);
  lat.nn_start_.assign(1, 0);
  for (int i = 0; i < n; ++i) {
    const auto& all = within[static_cast<std::size_t>(i)];
    std::vector<Neighbor> cand;
    for (const auto& nb : all) {
      if (nb.offset.norm() <= r_int) lat.int_.push_back(nb);
      if (nb.offset.norm() <= r_nn) cand.push_back(nb);
    }
    for (const auto& nb : cand) {
      if (voronoi_adjacent(nb.offset, cand, r_nn, 1e-9 * r0 * r0)) lat.nn_.push_back(nb);
    }
    lat.int_start_.push_back(static_cast<int>(lat.int_.size()));
    lat.nn_start_.push_back(static_cast<int>(lat.nn_.size()));
    if (lat.nn_start_.back() - lat.nn_start_[lat.nn_start_.size() - 2] < 3)
      throw Error(ErrorKind::InvalidDefect,
                  "site " + std::to_string(i) + " has fewer than 3 nearest neighbours");
  }

  // Reverse map from atoms to the interaction entries that reference them.
  lat.ref_start_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& nb : lat.int_) ++lat.ref_start_[static_cast<std::size_t>(nb.index) + 1];
  for (std::size_t a = 1; a < lat.ref_start_.size(); ++a) lat.ref_start_[a] += lat.ref_start_[a - 1];
  lat.ref_.assign(lat.int_.size(), {});
  {
    std::vector<int> fill(lat.ref_start_.begin(), lat.ref_start_.end() - 1);
    for (int i = 0; i < n; ++i) {
      const auto list = lat.interactions(i);
      for (std::size_t k = 0; k < list.size(); ++k) {
        auto& slot = fill[static_cast<std::size_t>(list[k].index)];
        lat.ref_[static_cast<std::size_t>(slot++)] = {i, static_cast<int>(k)};
      }
    }
  }
  return lat;
}

double min_separation(const DefectedLattice& lattice) {
  const auto& defects = lattice.defects().defects;
  if (defects.empty()) throw Error(ErrorKind::InvalidArgument, "min_separation needs a defect");
  const Mat2& s = lattice.supercell();
  double best = std::numeric_limits<double>::infinity();
  // Self images: shortest non-zero periodicity vector.
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b)
      if (a != 0 || b != 0) best = std::min(best, (s * Vec2(a, b)).norm());
  for (std::size_t i = 0; i < defects.size(); ++i)
    for (std::size_t j = i + 1; j < defects.size(); ++j)
      best = std::min(best, lattice.minimum_image(defects[i].position - defects[j].position).norm());
  return best;
}

double stencil_norm(const DefectedLattice& lattice, const Displacement& u, int site) {
  double sum = 0.0;
  const Vec2 ui = u.col(site);
  for (const auto& nb : lattice.nearest(site)) sum += (u.col(nb.index) - ui).squaredNorm();
  return std::sqrt(sum);
}

double global_stencil_norm(const DefectedLattice& lattice, const Displacement& u) {
  if (u.cols() != lattice.size())
    throw Error(ErrorKind::DimensionMismatch, "displacement size does not match lattice");
  double sum = 0.0;
  for (int i = 0; i < lattice.size(); ++i) {
    const Vec2 ui = u.col(i);
    for (const auto& nb : lattice.nearest(i)) sum += (u.col(nb.index) - ui).squaredNorm();
  }
  return std::sqrt(sum);
}

bool check_admissible(const DefectedLattice& lattice, const Displacement& u, double m,
                      double pair_radius) {
  if (!(m > 0)) throw Error(ErrorKind::InvalidArgument, "admissibility parameter must be positive");
  if (u.cols() != lattice.size())
    throw Error(ErrorKind::DimensionMismatch, "displacement size does not match lattice");
  if (!u.allFinite()) return false;
  const double rmax = pair_radius * lattice.r0();
  for (int i = 0; i < lattice.size(); ++i) {
    for (const auto& nb : lattice.interactions(i)) {
      const double r = nb.offset.norm();
      if (r > rmax) continue;
      const Vec2 y = nb.offset + u.col(nb.index) - u.col(i);
      if (!(y.norm() > m * r)) return false;
    }
  }
  return true;
}

StencilLaplacian::StencilLaplacian(const DefectedLattice& lattice) : n_(lattice.size()) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < n_; ++i) {
    for (const auto& nb : lattice.nearest(i)) {
      const int j = nb.index;
      trips.emplace_back(i, i, 1.0);
      trips.emplace_back(j, j, 1.0);
      trips.emplace_back(i, j, -1.0);
      trips.emplace_back(j, i, -1.0);
    }
  }
  k_.resize(n_, n_);
  k_.setFromTriplets(trips.begin(), trips.end());
  if (n_ > 1) {
    Eigen::SparseMatrix<double> reduced = k_.bottomRightCorner(n_ - 1, n_ - 1);
    pinned_.compute(reduced);
    if (pinned_.info() != Eigen::Success)
      throw Error(ErrorKind::EigensolverFailed, "stencil Laplacian factorisation failed");
  }
}

SiteVectors StencilLaplacian::solve(const SiteVectors& f) const {
  if (f.cols() != n_) throw Error(ErrorKind::DimensionMismatch, "field size mismatch");
  SiteVectors x = SiteVectors::Zero(2, n_);
  if (n_ <= 1) return x;
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd rhs = f.row(c).transpose();
    rhs.array() -= rhs.mean();
    Eigen::VectorXd y = pinned_.solve(rhs.tail(n_ - 1));
    x.row(c).tail(n_ - 1) = y.transpose();
    x.row(c).array() -= x.row(c).mean();
  }
  return x;
}

double StencilLaplacian::dual_norm(const SiteVectors& f) const {
  const SiteVectors x = solve(f);
  double s = 0.0;
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd fc = f.row(c).transpose();
    fc.array() -= fc.mean();
    s += fc.dot(x.row(c).transpose());
  }
  return std::sqrt(std::max(0.0, s));
}

double dual_norm(const DefectedLattice& lattice, const SiteVectors& f) {
  return StencilLaplacian(lattice).dual_norm(f);
}

void write_xyz(std::ostream& out, const DefectedLattice& lattice) {
  out.precision(17);
  for (int i = 0; i < lattice.size(); ++i)
    out << i << ' ' << lattice.position(i).x() << ' ' << lattice.position(i).y() << '\n';
}

}  // namespace mlipgen
