#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "picforest/balance/balance.hpp"
#include "picforest/field/velocity_field.hpp"
#include "picforest/properties/properties.hpp"
#include "picforest/sim/config.hpp"
#include "picforest/sim/output.hpp"

namespace pic {

/// Wall time per phase in seconds. Phases end at rank-wide barriers, so on
/// every rank they add up to the step's wall time.
struct PhaseTimes {
  double generate = 0.0;
  double advect = 0.0;
  double sort = 0.0;
  double exchange = 0.0;
  double properties = 0.0;
  double interpolate = 0.0;
  double repartition = 0.0;
  double output = 0.0;

  static constexpr std::array<std::string_view, 8> names{
      "generate", "advect", "sort", "exchange", "properties", "interpolate", "repartition", "output"};
  std::array<double, 8> values() const {
    return {generate, advect, sort, exchange, properties, interpolate, repartition, output};
  }
  double total() const;
  PhaseTimes& operator+=(const PhaseTimes& o);
};

struct TimingRow {
  int step = 0;
  int rank = 0;
  PhaseTimes phases;
  /// Barrier-to-barrier wall time of the whole step.
  double wall = 0.0;
};

struct StepStats {
  int step = 0;
  double time = 0.0;
  std::uint64_t alive = 0;
  std::uint64_t discarded_total = 0;
  /// Transport counters of this step, summed over ranks and stages.
  SortStats sort;
  std::vector<std::uint64_t> rank_particles;
  std::vector<std::uint64_t> rank_cells;
  double particle_ratio = 1.0;
  double cost_ratio = 1.0;
  std::uint64_t leaves_changed_owner = 0;
  std::optional<double> entrainment;
};

struct RunOptions {
  /// Empty: write nothing.
  std::filesystem::path output_dir;
  /// Keep the final particles (sorted by id) in the result.
  bool keep_final_records = false;
  /// Progress lines, one per output step.
  std::ostream* log = nullptr;
};

struct RunResult {
  RunConfig config;
  double dt = 0.0;
  std::size_t cells = 0;
  std::uint64_t generated = 0;
  std::vector<StepStats> stats;
  std::vector<TimingRow> timings;
  SortStats totals;
  std::vector<DiscardRecord> discarded;
  std::vector<ParticleRecord> final_records;
  Partition final_partition;
};

Forest build_forest(const MeshConfig& mesh);
/// Leaves whose bounding box lies within `width` of y = y0 + a cos(pi x / Lx).
std::vector<CellKey> interface_cells(const Forest& forest, const MeshConfig& mesh);
AnalyticField make_field(const RunConfig& config);
Density make_density(const RunConfig& config);
/// Plugins in list order plus the integrator scratch.
PropertyManager make_properties(const RunConfig& config);

/// Runs the configured simulation on config.ranks worker threads. Stats,
/// timings and (if requested) files are produced on rank 0. Throws
/// RankFailure if any rank fails, including a broken conservation ledger.
RunResult run_simulation(const RunConfig& config, const RunOptions& options = {});

void write_stats_csv(std::ostream& out, std::span<const StepStats> stats);
void write_timings_csv(std::ostream& out, std::span<const TimingRow> timings);

enum class BenchMode { strong, weak };
BenchMode parse_bench_mode(std::string_view name);

struct BenchRow {
  BenchMode mode = BenchMode::strong;
  int ranks = 1;
  std::uint64_t particles = 0;
  std::size_t cells = 0;
  int steps = 0;
  /// Mean over time steps of the slowest rank's time per phase.
  PhaseTimes per_step;
  double step_wall = 0.0;
};

/// Strong mode keeps the problem fixed; weak mode multiplies the particle
/// count and the coarse cell count in x by P. File output is disabled.
std::vector<BenchRow> scaling_benchmark(const RunConfig& base, std::span<const int> ranks,
                                        BenchMode mode, std::ostream* log = nullptr);
void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows);

struct ConvergenceSetup {
  /// Any field with a closed-form trajectory.
  std::string field = "rigid_rotation";
  Scheme scheme = Scheme::rk2;
  std::vector<double> dts{0.1, 0.05, 0.025, 0.0125, 0.00625};
  double t_end = 1.0;
  /// Use the Q1 interpolant of the field on a mesh of spacing h.
  bool discrete = false;
  double h = 1.0 / 32.0;
  int particles = 64;
};

struct ConvergenceRow {
  double dt = 0.0;
  int steps = 0;
  /// Largest position error over all particles at t_end.
  double error = 0.0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::optional<double> order;
};

ConvergenceResult convergence_study(const ConvergenceSetup& setup);
void write_convergence_csv(std::ostream& out, const ConvergenceResult& result);

}  // namespace pic
