#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "picforest/sim/simulation.hpp"

using namespace pic;

namespace {

Forest annulus(int nx, int ny) { return Forest::build(AnnulusDomain{0.5, 1.0, {0.0, 0.0}}, nx, ny); }

std::vector<Vec2> band_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2> out(n);
  for (Vec2& p : out) {
    const double r = 0.55 + 0.4 * u(rng);
    const double a = 6.283185307179586 * u(rng);
    p = {r * std::cos(a), r * std::sin(a)};
  }
  return out;
}

void BM_Locate(benchmark::State& state) {
  const Forest f = annulus(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)) / 8);
  const auto pts = band_points(4096, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.locate(pts[i++ & 4095]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Locate)->Arg(128)->Arg(512);

void BM_InvertMapping(benchmark::State& state) {
  const Forest f = annulus(128, 16);
  const auto pts = band_points(4096, 2);
  std::vector<std::pair<Quad, Vec2>> cases;
  for (const Vec2& p : pts) cases.emplace_back(f.leaf(f.locate(p)->leaf).vertices, p);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [q, p] = cases[i++ & 4095];
    benchmark::DoNotOptimize(invert_mapping(q, p));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_InvertMapping);

/// One rotation step of every particle followed by re-sorting on one rank.
void BM_AdvectAndSort(benchmark::State& state) {
  const Forest f = annulus(256, 32);
  const auto field = AnalyticField::rigid_rotation(1.0);
  const double dt = compute_cfl_dt(field, f, 0.5);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto scheme = static_cast<Scheme>(state.range(1));
  World world(1);
  world.run([&](Comm& comm) {
    ParticleStore store(scratch_size(scheme));
    const RankTopology topo(f, Partition::uniform(f.size(), 1), 0);
    const auto pts = band_points(n, 3);
    insert_prescribed(comm, store, f, topo, pts);
    std::vector<DiscardRecord> discarded;
    double t = 0.0;
    for (auto _ : state) {
      advance_particles(comm, store, f, topo, field, scheme, t, dt, 0, discarded);
      t += dt;
    }
  });
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_AdvectAndSort)
    ->Args({10000, static_cast<int>(Scheme::euler)})
    ->Args({10000, static_cast<int>(Scheme::rk2)})
    ->Args({10000, static_cast<int>(Scheme::rk4)})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_MetropolisHastings(benchmark::State& state) {
  const Quad q{Vec2{0, 0}, Vec2{1.2, 0.1}, Vec2{0.1, 0.9}, Vec2{1.0, 1.1}};
  const Density rho = [](Vec2 x) { return 1.0 + x.x * x.y; };
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(sample_in_cell_mh(q, rho, 64, rng));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_MetropolisHastings);

void BM_InterpolateValue(benchmark::State& state) {
  const auto scheme = static_cast<InterpolationScheme>(state.range(0));
  Cell cell;
  cell.vertices = {Vec2{0, 0}, Vec2{1, 0}, Vec2{0, 1}, Vec2{1, 1}};
  cell.center = {0.5, 0.5};
  cell.diameter = std::sqrt(2.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Contribution> c;
  for (ParticleId id = 0; id < 16; ++id) {
    const Vec2 x{u(rng), u(rng)};
    c.push_back({id, x, x, 1.0 + u(rng)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(interpolate_value(scheme, cell, {0.5, 0.5}, c));
}
BENCHMARK(BM_InterpolateValue)
    ->DenseRange(0, static_cast<int>(InterpolationScheme::least_squares_linear));

/// Whole time steps of the circular-flow scenario at a given rank count.
void BM_CircularFlowSteps(benchmark::State& state) {
  RunConfig c = scenario_defaults("circular_flow");
  c.particles.count = 20000;
  c.steps = 10;
  c.ranks = static_cast<int>(state.range(0));
  c.output.format = "none";
  c.output.partition = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_simulation(c));
  state.SetItemsProcessed(state.iterations() * c.steps * static_cast<std::int64_t>(c.particles.count));
}
BENCHMARK(BM_CircularFlowSteps)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
