#include "picforest/particles/particle_store.hpp"

#include <algorithm>
#include <string>

namespace pic {

PropertyPool::PropertyPool(std::size_t stride) : stride_(stride) {}

PropertySlot PropertyPool::allocate() {
  PropertySlot s;
  if (!free_.empty()) {
    s = free_.back();
    free_.pop_back();
    std::fill_n(arena_.begin() + static_cast<std::ptrdiff_t>(s * stride_), stride_, 0.0);
    used_[s] = true;
  } else {
    s = static_cast<PropertySlot>(used_.size());
    used_.push_back(true);
    arena_.resize(arena_.size() + stride_, 0.0);
  }
  ++in_use_count_;
  return s;
}

void PropertyPool::release(PropertySlot slot) {
  if (slot >= used_.size() || !used_[slot])
    throw StoreError("property slot " + std::to_string(slot) + " released twice or never allocated");
  used_[slot] = false;
  free_.push_back(slot);
  --in_use_count_;
}

void ParticleContainer::insert(const CellKey& key, const Particle& p) {
  cells_[key].push_back(p);
  ++size_;
}

Particle ParticleContainer::remove(const CellKey& key, ParticleId id) {
  auto it = cells_.find(key);
  if (it != cells_.end()) {
    auto& list = it->second;
    auto pit = std::find_if(list.begin(), list.end(), [id](const Particle& p) { return p.id == id; });
    if (pit != list.end()) {
      const Particle out = *pit;
      list.erase(pit);
      if (list.empty()) cells_.erase(it);
      --size_;
      return out;
    }
  }
  throw StoreError("remove: particle " + std::to_string(id) + " not found in cell (" +
                   std::to_string(key.level) + ", " + std::to_string(key.index) + ")");
}

std::span<const Particle> ParticleContainer::particles_in_cell(const CellKey& key) const {
  auto it = cells_.find(key);
  if (it == cells_.end()) return {};
  return it->second;
}

std::span<Particle> ParticleContainer::particles_in_cell(const CellKey& key) {
  auto it = cells_.find(key);
  if (it == cells_.end()) return {};
  return it->second;
}

void ParticleContainer::bulk_insert_sorted(std::span<const std::pair<CellKey, Particle>> items) {
  for (std::size_t i = 1; i < items.size(); ++i)
    if (items[i].first < items[i - 1].first) throw StoreError("bulk insert input is not sorted by key");
  auto hint = cells_.begin();
  std::size_t i = 0;
  while (i < items.size()) {
    const CellKey key = items[i].first;
    hint = cells_.lower_bound(key);
    if (hint == cells_.end() || hint->first != key) hint = cells_.emplace_hint(hint, key, std::vector<Particle>{});
    auto& list = hint->second;
    std::size_t j = i;
    while (j < items.size() && items[j].first == key) ++j;
    list.reserve(list.size() + (j - i));
    for (; i < j; ++i) list.push_back(items[i].second);
  }
  size_ += items.size();
}

ParticleContainer::CellMap ParticleContainer::take_all() {
  CellMap out;
  out.swap(cells_);
  size_ = 0;
  return out;
}

std::vector<Particle> ParticleContainer::take_cell(const CellKey& key) {
  auto it = cells_.find(key);
  if (it == cells_.end()) return {};
  std::vector<Particle> out = std::move(it->second);
  cells_.erase(it);
  size_ -= out.size();
  return out;
}

void ParticleContainer::clear() {
  cells_.clear();
  size_ = 0;
}

Particle ParticleStore::make_particle(ParticleId id, Vec2 location, Vec2 reference) {
  return Particle{id, location, reference, pool_.allocate()};
}

void ParticleStore::erase_owned(const CellKey& key, ParticleId id) {
  pool_.release(owned_.remove(key, id).slot);
}

void ParticleStore::clear_ghosts() {
  ghosts_.for_each([this](const CellKey&, const Particle& p) { pool_.release(p.slot); });
  ghosts_.clear();
}

}  // namespace pic
