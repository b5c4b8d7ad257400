#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mlipgen {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Per-site displacement (or force) vectors; column i belongs to site i.
using Displacement = Eigen::Matrix2Xd;
using SiteVectors = Eigen::Matrix2Xd;

struct BravaisSpec {
  Mat2 cell;  // columns are the primitive vectors
  double r0 = 1.0;
  int dimension = 2;

  /// Triangular lattice with nearest-neighbour spacing r0.
  static BravaisSpec triangular(double r0);
  void validate() const;
};

/// Supercell vectors are repeat * cell * multiples; the default is an N x N
/// rhombus of primitive cells.
struct SupercellSpec {
  int repeat = 1;
  Eigen::Matrix2i multiples = Eigen::Matrix2i::Identity();
};

enum class DefectKind { Vacancy, Interstitial };

const char* to_string(DefectKind kind) noexcept;
DefectKind defect_kind_from_string(const std::string& name);

struct Defect {
  DefectKind kind = DefectKind::Vacancy;
  Vec2 position = Vec2::Zero();
};

struct DefectSet {
  std::vector<Defect> defects;
  double core_radius = 1.0;  // length units

  int count() const { return static_cast<int>(defects.size()); }
};

/// One entry of a neighbour list: the neighbouring site and the reference
/// vector from the owning site to the (possibly periodic) image of it.
struct Neighbor {
  int index = 0;
  Vec2 offset = Vec2::Zero();
};

/// Location of an interaction-list entry that points at a given atom.
struct SlotRef {
  int site = 0;
  int slot = 0;
};

struct LatticeOptions {
  /// Reference-configuration radius of the interaction lists, in units of r0.
  double interaction_radius = 3.5;
  /// Candidate radius for the Voronoi nearest-neighbour test, in units of r0.
  double nn_candidate_radius = 2.0;
};

class DefectedLattice {
 public:
  int size() const { return static_cast<int>(positions_.size()); }
  const std::vector<Vec2>& positions() const { return positions_; }
  const Vec2& position(int i) const { return positions_[static_cast<std::size_t>(i)]; }

  const BravaisSpec& bravais() const { return bravais_; }
  const SupercellSpec& cell_spec() const { return cell_spec_; }
  /// Columns are the periodicity vectors of the computational cell.
  const Mat2& supercell() const { return supercell_; }
  const DefectSet& defects() const { return defects_; }
  double r0() const { return bravais_.r0; }

  std::span<const Neighbor> nearest(int i) const;
  std::span<const Neighbor> interactions(int i) const;
  std::span<const SlotRef> referrers(int atom) const;
  double interaction_radius() const { return interaction_radius_; }

  /// Periodic representative of a difference vector with the smallest norm.
  Vec2 minimum_image(const Vec2& d) const;
  /// Representative of x inside the half-open cell centred at the origin.
  Vec2 wrap(const Vec2& x) const;
  std::optional<int> find_site(const Vec2& x, double tol) const;
  /// Half the length of the shortest periodicity vector.
  double domain_radius() const;

 private:
  friend DefectedLattice build_lattice(const BravaisSpec&, const SupercellSpec&,
                                       const DefectSet&, const LatticeOptions&);

  std::vector<Vec2> positions_;
  BravaisSpec bravais_;
  SupercellSpec cell_spec_;
  Mat2 supercell_ = Mat2::Identity();
  Mat2 supercell_inv_ = Mat2::Identity();
  DefectSet defects_;
  double interaction_radius_ = 0.0;

  std::vector<int> nn_start_;
  std::vector<Neighbor> nn_;
  std::vector<int> int_start_;
  std::vector<Neighbor> int_;
  std::vector<int> ref_start_;
  std::vector<SlotRef> ref_;

  // Spatial bins in fractional coordinates, used for site lookup.
  int bins0_ = 1;
  int bins1_ = 1;
  std::vector<int> bin_start_;
  std::vector<int> bin_sites_;
};

DefectedLattice build_lattice(const BravaisSpec& bravais, const SupercellSpec& cell,
                              const DefectSet& defects, const LatticeOptions& options = {});

/// L_D: smallest distance between distinct defect cores over all periodic
/// images; with a single defect this is the shortest periodicity vector.
double min_separation(const DefectedLattice& lattice);

double stencil_norm(const DefectedLattice& lattice, const Displacement& u, int site);
double global_stencil_norm(const DefectedLattice& lattice, const Displacement& u);

/// Non-collision test |y(l) - y(k)| > m |l - k| for reference pairs closer
/// than `pair_radius` (units of r0).
bool check_admissible(const DefectedLattice& lattice, const Displacement& u, double m,
                      double pair_radius = 3.0);

/// Graph Laplacian of the nearest-neighbour stencil, so that
/// ||Du||^2 = sum over components of u_c^T K u_c.
class StencilLaplacian {
 public:
  explicit StencilLaplacian(const DefectedLattice& lattice);

  const Eigen::SparseMatrix<double>& matrix() const { return k_; }
  /// Mean-free solution of K x = f for each component (f is projected first).
  SiteVectors solve(const SiteVectors& f) const;
  /// Norm of a force-like field in the dual of the energy seminorm.
  double dual_norm(const SiteVectors& f) const;

 private:
  Eigen::SparseMatrix<double> k_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> pinned_;
  int n_ = 0;
};

double dual_norm(const DefectedLattice& lattice, const SiteVectors& f);

/// Writes one line per site: index, x, y.
void write_xyz(std::ostream& out, const DefectedLattice& lattice);

}  // namespace mlipgen
