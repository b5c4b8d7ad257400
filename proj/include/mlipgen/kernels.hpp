#pragma once

#include <span>
#include <vector>

#include "mlipgen/lattice.hpp"
#include "mlipgen/potential.hpp"

namespace mlipgen::kernels {

/// Serial loops are the reference; Parallel runs the same per-site work under
/// OpenMP and reduces in a fixed order, so its results are reproducible.
enum class Exec { Serial, Parallel };

/// Deformed neighbour vectors of `site` that lie inside the cutoff, and the
/// atoms they belong to.
void gather_environment(const DefectedLattice& lattice, const Displacement& u, int site,
                        double cutoff, std::vector<Vec2>& env, std::vector<int>& slots);

/// Raw site energies V(g_l(u)) (no reference subtraction).
void site_energies(Exec exec, const DefectedLattice& lattice, const SitePotential& pot,
                   const Displacement& u, std::span<double> out);

/// Raw site energies and forces -dE/du; returns the sum of raw site energies.
double energy_forces(Exec exec, const DefectedLattice& lattice, const SitePotential& pot,
                     const Displacement& u, std::span<double> site_out, SiteVectors& forces);

}  // namespace mlipgen::kernels
