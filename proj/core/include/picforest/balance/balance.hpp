#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "picforest/mesh/forest.hpp"
#include "picforest/parallel/runtime.hpp"
#include "picforest/parallel/topology.hpp"
#include "picforest/particles/particle_store.hpp"
#include "picforest/transport/transport.hpp"

namespace pic {

/// Cost of a leaf holding n particles: 1 + W n.
inline double cell_cost(std::uint64_t particles, double w) {
  return 1.0 + w * static_cast<double>(particles);
}

/// Global particle count of every leaf, summed over whatever each rank holds.
/// Collective; identical on all ranks.
std::vector<std::uint64_t> global_leaf_counts(Comm& comm, const ParticleStore& store,
                                              const Forest& forest);

struct MigrationStats {
  std::uint64_t leaves_changed_owner = 0;
  std::uint64_t particles_sent = 0;
  std::uint64_t particles_received = 0;
};

/// Ships every owned particle whose leaf belongs to another rank under
/// `target` to that rank, as WireParticle records in one all-to-all
/// exchange. Particles may start on any rank. Ghost copies are dropped.
MigrationStats migrate_particles(Comm& comm, ParticleStore& store, const Forest& forest,
                                 const Partition& target);

/// New partition from costs 1 + W n, then migration. Returns the new
/// topology; the caller refreshes ghost particles.
RankTopology repartition_and_migrate(Comm& comm, ParticleStore& store, const Forest& forest,
                                     const RankTopology& topology, double w,
                                     MigrationStats* stats = nullptr);

/// Child quadrant holding a parent reference point (0.5 goes to the lower
/// half) and the point in that child's reference coordinates.
std::pair<unsigned, Vec2> refine_reference(Vec2 parent_ref);
/// Inverse of refine_reference for child c.
Vec2 coarsen_reference(unsigned child, Vec2 child_ref);

/// Re-keys the owned particles of `old_forest` onto `adapted.forest`:
/// refined leaves hand particles down to the child containing them, coarsened
/// families merge into the parent. Particles stay on their rank; follow up
/// with migrate_particles. Ghost copies are dropped.
void transfer_particles(ParticleStore& store, const Forest& old_forest, const Adaptation& adapted);

struct ImbalanceReport {
  std::vector<std::uint64_t> cells;
  std::vector<std::uint64_t> particles;
  std::vector<double> cost;
  /// max / mean per quantity; 1 when the mean is zero.
  double cell_ratio = 1.0;
  double particle_ratio = 1.0;
  double cost_ratio = 1.0;
};

ImbalanceReport imbalance_from_counts(std::span<const std::uint64_t> cells,
                                      std::span<const std::uint64_t> particles, double w);

/// Collective: per-rank cells, particles and combined cost.
ImbalanceReport imbalance_report(Comm& comm, const ParticleStore& store,
                                 const RankTopology& topology, double w);

/// Per-rank totals of a given partition applied to known per-leaf counts.
ImbalanceReport imbalance_of_partition(const Partition& partition,
                                       std::span<const std::uint64_t> leaf_particles, double w);

/// CSV `leaf_morton_rank,level,index,owner,particles,cost`.
void write_partition_csv(std::ostream& out, const Forest& forest, const Partition& partition,
                         std::span<const std::uint64_t> leaf_particles, double w);

}  // namespace pic
