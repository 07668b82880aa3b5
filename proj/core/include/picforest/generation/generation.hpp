#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "picforest/mesh/forest.hpp"
#include "picforest/parallel/runtime.hpp"
#include "picforest/parallel/topology.hpp"
#include "picforest/particles/particle_store.hpp"

namespace pic {

/// Non-negative, not necessarily normalized particle density.
using Density = std::function<double(Vec2)>;

/// Called once for every newly created particle, after its slot is allocated.
using ParticleInit = std::function<void(const CellKey&, Particle&, std::span<double>)>;

using Rng = std::mt19937_64;

/// Independent stream per (seed, rank).
Rng make_rank_rng(std::uint64_t seed, int rank);

/// Splits n proportionally to weights: floor shares, then one extra to the
/// largest fractional parts, ties to the lower index.
std::vector<std::uint64_t> distribute_counts(std::uint64_t n, std::span<const double> weights);

struct GenerationPlan {
  std::uint64_t global_count = 0;
  double global_weight = 0.0;
  double local_weight = 0.0;
  std::uint64_t local_count = 0;
  std::uint64_t local_start_id = 0;
  /// Owned leaf indices and the inclusive running sum of their weights.
  std::vector<std::uint32_t> cells;
  std::vector<double> accumulated;
};

/// Cell weight is rho(center) * area. Collective over all ranks; throws
/// GenerationError if the global weight is zero.
GenerationPlan plan_generation(Comm& comm, const Forest& forest, const RankTopology& topology,
                               const Density& rho, std::uint64_t n_global);

/// Same plan computed from explicit per-rank weights, without communication.
GenerationPlan plan_from_weights(std::span<const double> rank_weights, int rank,
                                 std::uint64_t n_global);

/// Leaf index with probability proportional to its weight.
std::uint32_t draw_cell(const GenerationPlan& plan, Rng& rng);

struct CellSample {
  Vec2 location;
  Vec2 reference;
};

inline constexpr int kRejectionAttemptCap = 10000;

/// Uniform point in the cell by rejection from its bounding box.
CellSample sample_in_cell_rejection(const Quad& cell, Rng& rng);

struct MhOptions {
  int burn_in = 100;
  int max_zero_rejections = 50;
  /// Weight the target by |det grad Phi|; turning it off targets rho o Phi.
  bool jacobian_weight = true;
  /// When set, receives one flag per proposal after burn-in (true = accepted).
  std::vector<bool>* acceptance_log = nullptr;
  /// When set, receives the thinning stride J that was used.
  int* stride = nullptr;
};

/// Metropolis-Hastings on the reference cell with uniform proposals,
/// thinned to every J-th state where J is the longest run of repeated states.
std::vector<CellSample> sample_in_cell_mh(const Quad& cell, const Density& rho, std::size_t count,
                                          Rng& rng, const MhOptions& options = {});

enum class InCellSampler { rejection, metropolis_hastings };

/// Full random generation on this rank: plan, draw cells, sample inside,
/// bulk insert with ids local_start_id + k. Returns the plan.
GenerationPlan generate_random(Comm& comm, ParticleStore& store, const Forest& forest,
                               const RankTopology& topology, const Density& rho,
                               std::uint64_t n_global, InCellSampler sampler, std::uint64_t seed,
                               const ParticleInit& init = {});

struct PrescribedResult {
  std::uint64_t inserted_local = 0;
  /// Points inserted on no rank (outside the domain), global.
  std::uint64_t skipped_global = 0;
};

/// Inserts the points that fall into owned cells; id = position in `points`.
PrescribedResult insert_prescribed(Comm& comm, ParticleStore& store, const Forest& forest,
                                   const RankTopology& topology, std::span<const Vec2> points,
                                   const ParticleInit& init = {});

/// One particle per owned leaf and reference coordinate, ids contiguous in
/// Morton order across ranks.
void insert_reference_per_cell(Comm& comm, ParticleStore& store, const Forest& forest,
                               const RankTopology& topology, std::span<const Vec2> references,
                               const ParticleInit& init = {});

/// CSV `x,y`, one point per line; a header line is allowed.
std::vector<Vec2> read_points_csv(std::istream& in);

}  // namespace pic
