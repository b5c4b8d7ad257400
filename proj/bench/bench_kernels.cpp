// Serial reference against OpenMP kernels on a two-vacancy cell.
#include <benchmark/benchmark.h>

#include <random>

#include "mlipgen/kernels.hpp"
#include "mlipgen/setup.hpp"

using namespace mlipgen;

namespace {

struct Fixture {
  std::shared_ptr<const DefectedLattice> lattice;
  std::shared_ptr<const SitePotential> eam;
  std::shared_ptr<const SitePotential> surrogate;
  Displacement u;

  explicit Fixture(int n) {
    const RunConfig run = load_run_config(Config::parse(""));
    lattice = make_simulation_lattice(run, SimulationSpec{n, "vacancy", 2, n / 4});
    eam = make_reference(run);
    auto basis = build_basis(basis_spec(run, base_choice(run)));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    Eigen::VectorXd c(basis->size());
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = normal(rng) / (1.0 + i);
    surrogate = std::make_shared<const SurrogatePotential>(basis, c);
    u.resize(2, lattice->size());
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = 0.01 * run.r0 * normal(rng);
  }
};

const Fixture& fixture(int n) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Fixture(n)).first;
  return it->second;
}

void forces(benchmark::State& state, kernels::Exec exec, bool use_surrogate) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const SitePotential& pot = use_surrogate ? *f.surrogate : *f.eam;
  std::vector<double> site(static_cast<std::size_t>(f.lattice->size()));
  SiteVectors out;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::energy_forces(exec, *f.lattice, pot, f.u, site, out));
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * f.lattice->size());
}

}  // namespace

BENCHMARK_CAPTURE(forces, eam_serial, kernels::Exec::Serial, false)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(forces, eam_parallel, kernels::Exec::Parallel, false)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(forces, surrogate_serial, kernels::Exec::Serial, true)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(forces, surrogate_parallel, kernels::Exec::Parallel, true)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
