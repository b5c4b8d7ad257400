#include "mlipgen/kernels.hpp"

#include <omp.h>

#include <numeric>

namespace mlipgen::kernels {

void gather_environment(const DefectedLattice& lattice, const Displacement& u, int site,
                        double cutoff, std::vector<Vec2>& env, std::vector<int>& slots) {
  env.clear();
  slots.clear();
  const Vec2 ui = u.col(site);
  const double rc2 = cutoff * cutoff;
  const auto list = lattice.interactions(site);
  for (std::size_t k = 0; k < list.size(); ++k) {
    const Vec2 g = list[k].offset + u.col(list[k].index) - ui;
    if (g.squaredNorm() < rc2) {
      env.push_back(g);
      slots.push_back(static_cast<int>(k));
    }
  }
}

namespace {

void site_energies_serial(const DefectedLattice& lattice, const SitePotential& pot,
                          const Displacement& u, std::span<double> out) {
  std::vector<Vec2> env;
  std::vector<int> slots;
  for (int i = 0; i < lattice.size(); ++i) {
    gather_environment(lattice, u, i, pot.cutoff(), env, slots);
    out[static_cast<std::size_t>(i)] = pot.energy(env);
  }
}

void site_energies_parallel(const DefectedLattice& lattice, const SitePotential& pot,
                            const Displacement& u, std::span<double> out) {
  const int n = lattice.size();
#pragma omp parallel
  {
    std::vector<Vec2> env;
    std::vector<int> slots;
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      gather_environment(lattice, u, i, pot.cutoff(), env, slots);
      out[static_cast<std::size_t>(i)] = pot.energy(env);
    }
  }
}

// Reference implementation: scatter each site's gradient onto its atoms.
double energy_forces_serial(const DefectedLattice& lattice, const SitePotential& pot,
                            const Displacement& u, std::span<double> site_out,
                            SiteVectors& forces) {
  const int n = lattice.size();
  forces.setZero(2, n);
  std::vector<Vec2> env;
  std::vector<int> slots;
  std::vector<Vec2> grad;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    gather_environment(lattice, u, i, pot.cutoff(), env, slots);
    grad.assign(env.size(), Vec2::Zero());
    const double e = pot.energy_gradient(env, grad);
    site_out[static_cast<std::size_t>(i)] = e;
    total += e;
    const auto list = lattice.interactions(i);
    for (std::size_t k = 0; k < env.size(); ++k) {
      const int j = list[static_cast<std::size_t>(slots[k])].index;
      forces.col(j) -= grad[k];
      forces.col(i) += grad[k];
    }
  }
  return total;
}

// Per-site gradients are written into slot-aligned storage, then every atom
// gathers its contributions in a fixed order (no atomics, reproducible).
double energy_forces_parallel(const DefectedLattice& lattice, const SitePotential& pot,
                              const Displacement& u, std::span<double> site_out,
                              SiteVectors& forces) {
  const int n = lattice.size();
  forces.setZero(2, n);
  std::vector<std::size_t> start(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i)
    start[static_cast<std::size_t>(i) + 1] = start[static_cast<std::size_t>(i)] + lattice.interactions(i).size();
  std::vector<Vec2> slot_grad(start.back(), Vec2::Zero());

#pragma omp parallel
  {
    std::vector<Vec2> env;
    std::vector<int> slots;
    std::vector<Vec2> grad;
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      gather_environment(lattice, u, i, pot.cutoff(), env, slots);
      grad.assign(env.size(), Vec2::Zero());
      site_out[static_cast<std::size_t>(i)] = pot.energy_gradient(env, grad);
      const std::size_t base = start[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < env.size(); ++k)
        slot_grad[base + static_cast<std::size_t>(slots[k])] = grad[k];
    }

#pragma omp for schedule(static)
    for (int p = 0; p < n; ++p) {
      Vec2 f = Vec2::Zero();
      const std::size_t base = start[static_cast<std::size_t>(p)];
      const std::size_t len = lattice.interactions(p).size();
      for (std::size_t k = 0; k < len; ++k) f += slot_grad[base + k];
      for (const auto& ref : lattice.referrers(p))
        f -= slot_grad[start[static_cast<std::size_t>(ref.site)] + static_cast<std::size_t>(ref.slot)];
      forces.col(p) = f;
    }
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += site_out[static_cast<std::size_t>(i)];
  return total;
}

}  // namespace

void site_energies(Exec exec, const DefectedLattice& lattice, const SitePotential& pot,
                   const Displacement& u, std::span<double> out) {
  if (exec == Exec::Serial)
    site_energies_serial(lattice, pot, u, out);
  else
    site_energies_parallel(lattice, pot, u, out);
}

double energy_forces(Exec exec, const DefectedLattice& lattice, const SitePotential& pot,
                     const Displacement& u, std::span<double> site_out, SiteVectors& forces) {
  return exec == Exec::Serial ? energy_forces_serial(lattice, pot, u, site_out, forces)
                              : energy_forces_parallel(lattice, pot, u, site_out, forces);
}

}  // namespace mlipgen::kernels
