#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "picforest/mesh/cell_key.hpp"
#include "picforest/types.hpp"

namespace pic {

using ParticleId = std::uint64_t;

/// Handle to a fixed-size chunk of the property pool.
using PropertySlot = std::uint32_t;

struct Particle {
  ParticleId id = 0;
  Vec2 location;
  Vec2 reference_location;
  PropertySlot slot = 0;
};

/// Contiguous arena of `stride` doubles per slot with a free list.
class PropertyPool {
 public:
  explicit PropertyPool(std::size_t stride);

  std::size_t stride() const { return stride_; }
  std::size_t in_use() const { return in_use_count_; }

  /// Returns a zero-filled slot.
  PropertySlot allocate();
  void release(PropertySlot slot);

  std::span<double> data(PropertySlot slot) { return {arena_.data() + slot * stride_, stride_}; }
  std::span<const double> data(PropertySlot slot) const {
    return {arena_.data() + slot * stride_, stride_};
  }

 private:
  std::size_t stride_;
  std::vector<double> arena_;
  std::vector<PropertySlot> free_;
  std::vector<bool> used_;
  std::size_t in_use_count_ = 0;
};

/// Cell-sorted particle container. Cells iterate in CellKey order, particles
/// inside a cell in insertion order. Cells with no particles are not stored.
class ParticleContainer {
 public:
  using CellMap = std::map<CellKey, std::vector<Particle>>;

  void insert(const CellKey& key, const Particle& p);
  /// Throws StoreError if no particle with that id is stored under key.
  Particle remove(const CellKey& key, ParticleId id);

  std::span<const Particle> particles_in_cell(const CellKey& key) const;
  std::span<Particle> particles_in_cell(const CellKey& key);

  std::size_t size() const { return size_; }
  std::size_t cell_count() const { return cells_.size(); }
  bool empty() const { return size_ == 0; }

  /// Appends a sequence already sorted by key. Throws StoreError otherwise.
  void bulk_insert_sorted(std::span<const std::pair<CellKey, Particle>> items);

  const CellMap& cells() const { return cells_; }
  /// Mutable access to particle data; the set of particles must not change.
  template <class F>
  void for_each(F&& f) {
    for (auto& [key, list] : cells_)
      for (Particle& p : list) f(key, p);
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& [key, list] : cells_)
      for (const Particle& p : list) f(key, p);
  }

  /// Visits each stored cell with its particles; the set must not change.
  template <class F>
  void for_each_cell(F&& f) {
    for (auto& [key, list] : cells_) f(key, std::span<Particle>(list));
  }

  /// Keeps, in order, the particles for which keep(key, p) is true. keep may
  /// modify p; rejected particles are dropped from the container and become
  /// the callback's responsibility. Emptied cells are erased.
  template <class F>
  void retain(F&& keep) {
    for (auto it = cells_.begin(); it != cells_.end();) {
      auto& list = it->second;
      std::size_t w = 0;
      for (std::size_t r = 0; r < list.size(); ++r)
        if (keep(it->first, list[r])) list[w++] = list[r];
      size_ -= list.size() - w;
      list.resize(w);
      it = list.empty() ? cells_.erase(it) : std::next(it);
    }
  }

  /// Removes and returns everything.
  CellMap take_all();
  /// Removes and returns one cell's particles.
  std::vector<Particle> take_cell(const CellKey& key);
  void clear();

 private:
  CellMap cells_;
  std::size_t size_ = 0;
};

/// Owned particles plus a second container of read-only ghost copies. Both
/// draw property slots from one pool.
class ParticleStore {
 public:
  explicit ParticleStore(std::size_t n_properties) : pool_(n_properties) {}

  std::size_t n_properties() const { return pool_.stride(); }

  ParticleContainer& owned() { return owned_; }
  const ParticleContainer& owned() const { return owned_; }
  ParticleContainer& ghosts() { return ghosts_; }
  const ParticleContainer& ghosts() const { return ghosts_; }
  PropertyPool& pool() { return pool_; }
  const PropertyPool& pool() const { return pool_; }

  std::span<double> properties(const Particle& p) { return pool_.data(p.slot); }
  std::span<const double> properties(const Particle& p) const { return pool_.data(p.slot); }

  /// New particle with a fresh zeroed property slot (not inserted).
  Particle make_particle(ParticleId id, Vec2 location, Vec2 reference);

  /// Removes an owned particle and frees its slot.
  void erase_owned(const CellKey& key, ParticleId id);
  void release(const Particle& p) { pool_.release(p.slot); }
  void clear_ghosts();

 private:
  PropertyPool pool_;
  ParticleContainer owned_;
  ParticleContainer ghosts_;
};

}  // namespace pic
