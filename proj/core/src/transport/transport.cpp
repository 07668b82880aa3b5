#include "picforest/transport/transport.hpp"

#include <algorithm>
#include <ostream>

namespace pic {
namespace {

constexpr int kTagCount = 101;
constexpr int kTagPayload = 102;

using KeyedParticles = std::vector<std::pair<CellKey, Particle>>;

void stable_sort_by_key(KeyedParticles& v) {
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
}

struct Scored {
  bool touches;
  double score;
  CellKey key;
  std::uint32_t leaf;
};

void fill_candidates(const Forest& forest, std::uint32_t leaf, Vec2 x,
                     std::vector<Scored>& scratch, std::vector<std::uint32_t>& out) {
  const Cell& cell = forest.leaf(leaf);
  int closest = 0;
  double best = dot(x - cell.vertices[0], x - cell.vertices[0]);
  for (int v = 1; v < 4; ++v) {
    const double d = dot(x - cell.vertices[v], x - cell.vertices[v]);
    if (d < best) {
      best = d;
      closest = v;
    }
  }
  const Vec2 vpos = cell.vertices[closest];
  const Vec2 a = x - vpos;
  scratch.clear();
  const std::uint32_t vid = cell.vertex_ids[static_cast<std::size_t>(closest)];
  for (std::uint32_t n : forest.vertex_neighbors(leaf)) {
    const Cell& c = forest.leaf(n);
    // Shared vertex ids settle most cases; only a coarser neighbor can hold
    // the vertex as a hanging node on one of its edges.
    bool touches = std::find(c.vertex_ids.begin(), c.vertex_ids.end(), vid) != c.vertex_ids.end();
    if (!touches && c.key.level < cell.key.level) touches = forest.touches_vertex(n, leaf, closest);
    scratch.push_back({touches, dot(a, c.center - vpos), c.key, n});
  }
  // Cells around the closest vertex first, each group by descending a.b.
  std::sort(scratch.begin(), scratch.end(), [](const Scored& p, const Scored& q) {
    if (p.touches != q.touches) return p.touches;
    if (p.score != q.score) return p.score > q.score;
    return p.key < q.key;
  });
  out.clear();
  for (const Scored& s : scratch) out.push_back(s.leaf);
}

}  // namespace

SortStats& SortStats::operator+=(const SortStats& o) {
  processed += o.processed;
  kept += o.kept;
  moved_local += o.moved_local;
  sent += o.sent;
  received += o.received;
  discarded_out_of_domain += o.discarded_out_of_domain;
  discarded_unreachable += o.discarded_unreachable;
  first_candidate_hits += o.first_candidate_hits;
  neighbor_hits += o.neighbor_hits;
  resorted_on_receive += o.resorted_on_receive;
  return *this;
}

void Outboxes::add(int rank, const Particle& p, std::span<const double> props, const CellKey& dest) {
  append_wire(payload[rank], p, props, dest);
  ++counts[rank];
}

std::vector<std::uint32_t> neighbor_candidates(const Forest& forest, std::uint32_t leaf, Vec2 x) {
  std::vector<Scored> scratch;
  std::vector<std::uint32_t> out;
  fill_candidates(forest, leaf, x, scratch, out);
  return out;
}

SortStats sort_into_cells(ParticleStore& store, const Forest& forest, const RankTopology& topology,
                          Outboxes& outboxes, std::vector<DiscardRecord>& discarded) {
  SortStats st;
  KeyedParticles moved;
  std::vector<Scored> scratch;
  std::vector<std::uint32_t> candidates;
  // Particles that stay keep their slot in the container; leavers are
  // appended after the stayers of their new cell, as a full re-sort would.
  const CellKey* current = nullptr;
  std::uint32_t leaf = 0;
  store.owned().retain([&](const CellKey& key, Particle& p) {
    if (current == nullptr || *current != key) {
      const auto found = forest.find(key);
      if (!found || !topology.owns(*found))
        throw Error("particles stored under a cell this rank does not own");
      current = &key;
      leaf = *found;
    }
    const Cell& cell = forest.leaf(leaf);
    ++st.processed;
    if (auto ref = map_to_reference(cell.vertices, p.location)) {
      p.reference_location = *ref;
      ++st.kept;
      return true;
    }
    fill_candidates(forest, leaf, p.location, scratch, candidates);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const Cell& c = forest.leaf(candidates[k]);
      const auto ref = map_to_reference(c.vertices, p.location);
      if (!ref) continue;
      p.reference_location = *ref;
      ++st.neighbor_hits;
      if (k == 0) ++st.first_candidate_hits;
      if (topology.owns(candidates[k])) {
        moved.emplace_back(c.key, p);
        ++st.moved_local;
      } else {
        outboxes.add(topology.owner(candidates[k]), p, store.properties(p), c.key);
        store.release(p);
        ++st.sent;
      }
      return false;
    }
    const auto loc = forest.locate(p.location);
    if (loc && topology.owns(loc->leaf)) {
      p.reference_location = loc->reference;
      moved.emplace_back(forest.leaf(loc->leaf).key, p);
      ++st.moved_local;
      return false;
    }
    const DiscardReason why = loc ? DiscardReason::unreachable : DiscardReason::out_of_domain;
    discarded.push_back({p.id, p.location, why});
    if (loc)
      ++st.discarded_unreachable;
    else
      ++st.discarded_out_of_domain;
    store.release(p);
    return false;
  });
  stable_sort_by_key(moved);
  store.owned().bulk_insert_sorted(moved);
  return st;
}

std::map<int, Bytes> two_phase_exchange(Comm& comm, std::span<const int> peers,
                                        const Outboxes& outboxes, std::size_t n_properties) {
  const std::size_t rec = wire_record_size(n_properties);
  // Phase 1: every peer gets a count, so no rank waits on a message that is never sent.
  std::map<int, std::uint64_t> outgoing;
  for (int peer : peers) {
    const auto it = outboxes.counts.find(peer);
    const std::uint64_t n = it == outboxes.counts.end() ? 0 : it->second;
    outgoing[peer] = n;
    Bytes msg;
    append_u64(msg, n);
    comm.send(peer, kTagCount, std::move(msg), n);
  }
  for (const auto& [dst, count] : outboxes.counts)
    if (count > 0 && !outgoing.contains(dst))
      throw ProtocolError("outbox addressed to non-peer rank " + std::to_string(dst));
  std::map<int, std::uint64_t> incoming;
  for (int peer : peers) incoming[peer] = read_u64(comm.recv(peer, kTagCount), 0);

  // Phase 2: payloads only where there is something to send.
  for (int peer : peers) {
    const std::uint64_t n = outgoing[peer];
    if (n == 0) continue;
    const Bytes& data = outboxes.payload.at(peer);
    if (data.size() != n * rec)
      throw ProtocolError("outbox for rank " + std::to_string(peer) + " holds " +
                          std::to_string(data.size()) + " bytes for " + std::to_string(n) + " records");
    comm.send(peer, kTagPayload, data, n);
  }
  std::map<int, Bytes> inbox;
  for (int peer : peers) {
    const std::uint64_t n = incoming[peer];
    if (n == 0) continue;
    Bytes data = comm.recv(peer, kTagPayload);
    if (data.size() != n * rec)
      throw ProtocolError("rank " + std::to_string(peer) + " announced " + std::to_string(n) +
                          " records but sent " + std::to_string(data.size()) + " bytes");
    inbox.emplace(peer, std::move(data));
  }
  return inbox;
}

std::map<int, Bytes> neighbor_exchange(Comm& comm, const RankTopology& topology,
                                       const Outboxes& outboxes, std::size_t n_properties) {
  return two_phase_exchange(comm, topology.neighbors(), outboxes, n_properties);
}

void receive_particles(ParticleStore& store, const Forest& forest, const RankTopology& topology,
                       const std::map<int, Bytes>& inbox, SortStats& stats,
                       std::vector<DiscardRecord>& discarded) {
  KeyedParticles incoming;
  for (const auto& [src, data] : inbox) {
    for (const WireParticle& w : decode_wire(data, store.n_properties())) {
      ++stats.received;
      Particle p{w.id, w.location, w.reference_location, 0};
      CellKey key = w.destination;
      const auto leaf = forest.find(key);
      if (!leaf || !topology.owns(*leaf)) {
        ++stats.resorted_on_receive;
        const auto loc = forest.locate(w.location);
        if (!loc || !topology.owns(loc->leaf)) {
          discarded.push_back({w.id, w.location,
                               loc ? DiscardReason::unreachable : DiscardReason::out_of_domain});
          if (loc)
            ++stats.discarded_unreachable;
          else
            ++stats.discarded_out_of_domain;
          continue;
        }
        key = forest.leaf(loc->leaf).key;
        p.reference_location = loc->reference;
      }
      p.slot = store.pool().allocate();
      std::copy(w.properties.begin(), w.properties.end(), store.properties(p).begin());
      incoming.emplace_back(key, p);
    }
  }
  stable_sort_by_key(incoming);
  store.owned().bulk_insert_sorted(incoming);
}

SortStats transport_particles(Comm& comm, ParticleStore& store, const Forest& forest,
                              const RankTopology& topology, std::vector<DiscardRecord>& discarded) {
  Outboxes out;
  SortStats st = sort_into_cells(store, forest, topology, out, discarded);
  const auto inbox = neighbor_exchange(comm, topology, out, store.n_properties());
  receive_particles(store, forest, topology, inbox, st, discarded);
  return st;
}

void update_ghost_particles(Comm& comm, ParticleStore& store, const Forest& forest,
                            const RankTopology& topology) {
  store.clear_ghosts();
  Outboxes out;
  for (int n : topology.neighbors()) {
    for (std::uint32_t leaf : topology.boundary_for(n)) {
      const CellKey& key = forest.leaf(leaf).key;
      for (const Particle& p : store.owned().particles_in_cell(key))
        out.add(n, p, store.properties(p), key);
    }
  }
  const auto inbox = neighbor_exchange(comm, topology, out, store.n_properties());
  KeyedParticles incoming;
  for (const auto& [src, data] : inbox) {
    for (const WireParticle& w : decode_wire(data, store.n_properties())) {
      const auto leaf = forest.find(w.destination);
      if (!leaf || !topology.is_ghost(*leaf))
        throw ProtocolError("ghost particle addressed to a cell that is not a ghost here");
      Particle p{w.id, w.location, w.reference_location, store.pool().allocate()};
      std::copy(w.properties.begin(), w.properties.end(), store.properties(p).begin());
      incoming.emplace_back(w.destination, p);
    }
  }
  stable_sort_by_key(incoming);
  store.ghosts().bulk_insert_sorted(incoming);
}

void write_discard_log(std::ostream& out, std::span<const DiscardRecord> records) {
  out << "id,x,y,reason\n";
  out.precision(17);
  for (const DiscardRecord& r : records)
    out << r.id << ',' << r.position.x << ',' << r.position.y << ','
        << (r.reason == DiscardReason::out_of_domain ? "out_of_domain" : "unreachable") << '\n';
}

}  // namespace pic
