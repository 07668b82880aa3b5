#include "picforest/balance/balance.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace pic {
namespace {

double ratio(std::span<const double> v) {
  if (v.empty()) return 1.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (mean == 0.0) return 1.0;
  return *std::max_element(v.begin(), v.end()) / mean;
}

std::vector<double> as_double(std::span<const std::uint64_t> v) {
  return {v.begin(), v.end()};
}

}  // namespace

std::vector<std::uint64_t> global_leaf_counts(Comm& comm, const ParticleStore& store,
                                              const Forest& forest) {
  // Sparse (leaf, count) pairs from every rank.
  Bytes mine;
  for (const auto& [key, list] : store.owned().cells()) {
    const auto leaf = forest.find(key);
    if (!leaf) throw Error("particles stored under a cell that is not a leaf");
    append_u64(mine, *leaf);
    append_u64(mine, list.size());
  }
  std::vector<std::uint64_t> counts(forest.size(), 0);
  for (const Bytes& b : comm.allgather_bytes(mine))
    for (std::size_t off = 0; off < b.size(); off += 16) counts[read_u64(b, off)] += read_u64(b, off + 8);
  return counts;
}

MigrationStats migrate_particles(Comm& comm, ParticleStore& store, const Forest& forest,
                                 const Partition& target) {
  MigrationStats st;
  store.clear_ghosts();
  Outboxes out;
  std::vector<CellKey> leaving;
  for (const auto& [key, list] : store.owned().cells()) {
    const auto leaf = forest.find(key);
    if (!leaf) throw Error("particles stored under a cell that is not a leaf");
    if (target.owner(*leaf) != comm.rank()) leaving.push_back(key);
  }
  st.leaves_changed_owner = leaving.size();
  for (const CellKey& key : leaving) {
    const int dst = target.owner(*forest.find(key));
    for (const Particle& p : store.owned().take_cell(key)) {
      out.add(dst, p, store.properties(p), key);
      store.release(p);
      ++st.particles_sent;
    }
  }
  std::vector<int> peers;
  for (int r = 0; r < comm.size(); ++r)
    if (r != comm.rank()) peers.push_back(r);
  const auto inbox = two_phase_exchange(comm, peers, out, store.n_properties());
  const RankTopology topology(forest, target, comm.rank());
  SortStats sort;
  std::vector<DiscardRecord> discarded;
  receive_particles(store, forest, topology, inbox, sort, discarded);
  if (!discarded.empty()) throw ProtocolError("migrated particle arrived at a rank that does not own its cell");
  st.particles_received = sort.received;
  return st;
}

RankTopology repartition_and_migrate(Comm& comm, ParticleStore& store, const Forest& forest,
                                     const RankTopology& topology, double w, MigrationStats* stats) {
  const auto counts = global_leaf_counts(comm, store, forest);
  std::vector<double> costs(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) costs[i] = cell_cost(counts[i], w);
  const Partition next = partition_by_cost(costs, topology.partition().ranks());
  const MigrationStats st = migrate_particles(comm, store, forest, next);
  if (stats) *stats = st;
  return RankTopology(forest, next, comm.rank());
}

std::pair<unsigned, Vec2> refine_reference(Vec2 parent_ref) {
  const unsigned cx = parent_ref.x > 0.5 ? 1u : 0u;
  const unsigned cy = parent_ref.y > 0.5 ? 1u : 0u;
  return {cx | (cy << 1), {2.0 * parent_ref.x - cx, 2.0 * parent_ref.y - cy}};
}

Vec2 coarsen_reference(unsigned child, Vec2 child_ref) {
  return {0.5 * (child_ref.x + (child & 1u)), 0.5 * (child_ref.y + (child >> 1))};
}

void transfer_particles(ParticleStore& store, const Forest& old_forest, const Adaptation& adapted) {
  store.clear_ghosts();
  const Forest& next = adapted.forest;
  std::vector<std::pair<CellKey, Particle>> moved;
  auto cells = store.owned().take_all();
  for (auto& [key, list] : cells) {
    if (!old_forest.is_leaf(key)) throw Error("particles stored under a cell that is not a leaf");
    // Leaf of the new forest covering the old leaf: itself, an ancestor, or
    // (reached per particle) a descendant.
    CellKey up = key;
    while (up.level > 0 && !next.is_leaf(up)) up = parent_key(up);
    const bool climb = next.is_leaf(up) && up.level < key.level;
    for (Particle& p : list) {
      CellKey k = key;
      Vec2 ref = p.reference_location;
      if (climb) {
        while (k != up) {
          ref = coarsen_reference(child_position(k), ref);
          k = parent_key(k);
        }
      } else {
        while (!next.is_leaf(k)) {
          if (k.level >= next.max_level()) throw MeshError("adapted forest does not cover an old leaf");
          const auto [c, r] = refine_reference(ref);
          k = child_key(k, c);
          ref = r;
        }
      }
      p.reference_location = ref;
      moved.emplace_back(k, p);
    }
  }
  std::stable_sort(moved.begin(), moved.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  store.owned().bulk_insert_sorted(moved);
}

ImbalanceReport imbalance_from_counts(std::span<const std::uint64_t> cells,
                                      std::span<const std::uint64_t> particles, double w) {
  ImbalanceReport r;
  r.cells.assign(cells.begin(), cells.end());
  r.particles.assign(particles.begin(), particles.end());
  r.cost.resize(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    r.cost[i] = static_cast<double>(cells[i]) + w * static_cast<double>(particles[i]);
  r.cell_ratio = ratio(as_double(r.cells));
  r.particle_ratio = ratio(as_double(r.particles));
  r.cost_ratio = ratio(r.cost);
  return r;
}

ImbalanceReport imbalance_report(Comm& comm, const ParticleStore& store,
                                 const RankTopology& topology, double w) {
  const auto cells = comm.allgather<std::uint64_t>(topology.end() - topology.begin());
  const auto particles = comm.allgather<std::uint64_t>(store.owned().size());
  return imbalance_from_counts(cells, particles, w);
}

ImbalanceReport imbalance_of_partition(const Partition& partition,
                                       std::span<const std::uint64_t> leaf_particles, double w) {
  std::vector<std::uint64_t> cells(static_cast<std::size_t>(partition.ranks()), 0);
  std::vector<std::uint64_t> particles(cells.size(), 0);
  for (int r = 0; r < partition.ranks(); ++r) {
    cells[static_cast<std::size_t>(r)] = partition.end(r) - partition.begin(r);
    for (std::uint32_t i = partition.begin(r); i < partition.end(r); ++i)
      particles[static_cast<std::size_t>(r)] += leaf_particles[i];
  }
  return imbalance_from_counts(cells, particles, w);
}

void write_partition_csv(std::ostream& out, const Forest& forest, const Partition& partition,
                         std::span<const std::uint64_t> leaf_particles, double w) {
  out << "leaf_morton_rank,level,index,owner,particles,cost\n";
  out.precision(17);
  for (std::uint32_t i = 0; i < forest.size(); ++i) {
    const CellKey& k = forest.leaf(i).key;
    out << i << ',' << k.level << ',' << k.index << ',' << partition.owner(i) << ','
        << leaf_particles[i] << ',' << cell_cost(leaf_particles[i], w) << '\n';
  }
}

}  // namespace pic
