#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "picforest/mesh/forest.hpp"
#include "picforest/parallel/runtime.hpp"
#include "picforest/parallel/topology.hpp"
#include "picforest/particles/particle_store.hpp"
#include "picforest/transport/wire.hpp"

namespace pic {

struct SortStats {
  std::uint64_t processed = 0;
  std::uint64_t kept = 0;
  std::uint64_t moved_local = 0;
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t discarded_out_of_domain = 0;
  std::uint64_t discarded_unreachable = 0;
  /// Cross-cell moves resolved by the best-scored neighbor candidate.
  std::uint64_t first_candidate_hits = 0;
  /// Cross-cell moves resolved by any neighbor candidate.
  std::uint64_t neighbor_hits = 0;
  /// Received particles whose transmitted destination was not an owned leaf.
  std::uint64_t resorted_on_receive = 0;

  std::uint64_t discarded() const { return discarded_out_of_domain + discarded_unreachable; }
  SortStats& operator+=(const SortStats& o);
};

enum class DiscardReason { out_of_domain, unreachable };

struct DiscardRecord {
  ParticleId id;
  Vec2 position;
  DiscardReason reason;
};

/// Serialized particles per destination rank.
struct Outboxes {
  std::map<int, Bytes> payload;
  std::map<int, std::uint64_t> counts;

  void add(int rank, const Particle& p, std::span<const double> props, const CellKey& dest);
};

/// Re-associates every owned particle with a leaf after its location changed.
/// Order of attempts: current cell, vertex neighbors by descending
/// (x - v) . (center(K') - v) where v is the closest vertex of the current
/// cell, then a global tree search. Particles found in a ghost cell are
/// serialized for the ghost's owner; particles found nowhere owned are
/// discarded and logged.
SortStats sort_into_cells(ParticleStore& store, const Forest& forest, const RankTopology& topology,
                          Outboxes& outboxes, std::vector<DiscardRecord>& discarded);

/// Candidate order used by sort_into_cells for a point leaving `leaf`.
std::vector<std::uint32_t> neighbor_candidates(const Forest& forest, std::uint32_t leaf, Vec2 x);

/// Two-phase exchange with `peers`: one count message to every peer, then
/// payloads only where the count is non-zero. Returns payloads by source.
std::map<int, Bytes> two_phase_exchange(Comm& comm, std::span<const int> peers,
                                        const Outboxes& outboxes, std::size_t n_properties);

std::map<int, Bytes> neighbor_exchange(Comm& comm, const RankTopology& topology,
                                       const Outboxes& outboxes, std::size_t n_properties);

/// Inserts received particles using their transmitted destination. A stale
/// destination triggers a local search; particles that still have no owned
/// cell are discarded.
void receive_particles(ParticleStore& store, const Forest& forest, const RankTopology& topology,
                       const std::map<int, Bytes>& inbox, SortStats& stats,
                       std::vector<DiscardRecord>& discarded);

/// sort_into_cells + neighbor_exchange + receive_particles.
SortStats transport_particles(Comm& comm, ParticleStore& store, const Forest& forest,
                              const RankTopology& topology, std::vector<DiscardRecord>& discarded);

/// Rebuilds the ghost container from copies of neighbor ranks' particles in
/// this rank's ghost cells.
void update_ghost_particles(Comm& comm, ParticleStore& store, const Forest& forest,
                            const RankTopology& topology);

void write_discard_log(std::ostream& out, std::span<const DiscardRecord> records);

}  // namespace pic
