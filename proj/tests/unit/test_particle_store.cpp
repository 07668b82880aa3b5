#include <algorithm>
#include <set>

#include "doctest.h"
#include "generators.hpp"
#include "picforest/particles/particle_store.hpp"

using namespace pic;

namespace {

std::map<CellKey, std::vector<ParticleId>> ids_by_cell(const ParticleContainer& c) {
  std::map<CellKey, std::vector<ParticleId>> out;
  c.for_each([&](const CellKey& k, const Particle& p) { out[k].push_back(p.id); });
  return out;
}

}  // namespace

TEST_CASE("insert and lookup examples") {
  ParticleStore store(2);
  const CellKey k{1, 7};
  for (ParticleId id : {5u, 2u, 9u}) store.owned().insert(k, store.make_particle(id, {}, {}));
  const auto cell = store.owned().particles_in_cell(k);
  REQUIRE(cell.size() == 3);
  CHECK(cell[0].id == 5);
  CHECK(cell[1].id == 2);
  CHECK(cell[2].id == 9);
  CHECK(store.owned().size() == 3);

  ParticleStore single(0);
  single.owned().insert(k, single.make_particle(1, {}, {}));
  single.erase_owned(k, 1);
  CHECK(single.owned().cell_count() == 0);
  CHECK(single.owned().empty());
  CHECK_THROWS_AS(single.erase_owned(k, 1), StoreError);
}

TEST_CASE("iteration groups particles by ascending key") {
  testgen::Gen gen(1);
  ParticleContainer c;
  std::vector<CellKey> keys;
  for (int i = 0; i < 100; ++i)
    keys.push_back({static_cast<std::uint32_t>(gen.integer(0, 3)), static_cast<std::uint64_t>(gen.integer(0, 500))});
  for (ParticleId id = 0; id < 10000; ++id)
    c.insert(keys[static_cast<std::size_t>(gen.integer(0, 99))], Particle{id, {}, {}, 0});
  std::vector<CellKey> visited;
  c.for_each([&](const CellKey& k, const Particle&) { visited.push_back(k); });
  CHECK(visited.size() == 10000);
  CHECK(std::is_sorted(visited.begin(), visited.end()));
  std::size_t sum = 0;
  for (const auto& [k, list] : c.cells()) sum += list.size();
  CHECK(sum == c.size());
}

TEST_CASE("bulk insert examples") {
  ParticleContainer c;
  c.insert({0, 1}, Particle{1, {}, {}, 0});
  c.bulk_insert_sorted({});
  CHECK(c.size() == 1);

  ParticleContainer a, b;
  const std::pair<CellKey, Particle> one{{2, 3}, Particle{4, {1, 2}, {0.5, 0.5}, 0}};
  a.bulk_insert_sorted(std::span(&one, 1));
  b.insert(one.first, one.second);
  CHECK(ids_by_cell(a) == ids_by_cell(b));

  std::vector<std::pair<CellKey, Particle>> unsorted{{{1, 2}, Particle{}}, {{1, 1}, Particle{}}};
  CHECK_THROWS_AS(a.bulk_insert_sorted(unsorted), StoreError);
}

TEST_CASE("bulk insert matches repeated insert") {
  testgen::Gen gen(2);
  std::vector<std::pair<CellKey, Particle>> items;
  for (ParticleId id = 0; id < 100000; ++id)
    items.push_back({{static_cast<std::uint32_t>(gen.integer(0, 2)), static_cast<std::uint64_t>(gen.integer(0, 999))},
                     Particle{id, {}, {}, 0}});
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  ParticleContainer bulk, single;
  // Pre-existing content must be kept ahead of the appended particles.
  bulk.insert({1, 5}, Particle{999999, {}, {}, 0});
  single.insert({1, 5}, Particle{999999, {}, {}, 0});
  bulk.bulk_insert_sorted(items);
  for (const auto& [k, p] : items) single.insert(k, p);
  CHECK(bulk.size() == single.size());
  CHECK(ids_by_cell(bulk) == ids_by_cell(single));
}

TEST_CASE("property slots do not alias") {
  testgen::Gen gen(3);
  ParticleStore store(3);
  std::vector<Particle> ps;
  for (ParticleId id = 0; id < 500; ++id) ps.push_back(store.make_particle(id, {}, {}));
  // Release and reallocate some to exercise the free list.
  for (int i = 0; i < 100; ++i) {
    const auto j = static_cast<std::size_t>(gen.integer(0, 499));
    store.release(ps[j]);
    ps[j] = store.make_particle(ps[j].id, {}, {});
  }
  std::set<PropertySlot> slots;
  for (const Particle& p : ps) slots.insert(p.slot);
  CHECK(slots.size() == ps.size());
  for (const Particle& p : ps)
    for (double& v : store.properties(p)) v = static_cast<double>(p.id);
  for (const Particle& p : ps)
    for (double v : store.properties(p)) CHECK(v == static_cast<double>(p.id));
  CHECK(store.pool().in_use() == 500);
  CHECK_THROWS_AS(store.pool().release(100000), StoreError);
}

TEST_CASE("ghost container is separate") {
  ParticleStore store(1);
  store.owned().insert({0, 0}, store.make_particle(1, {}, {}));
  store.ghosts().insert({0, 1}, store.make_particle(2, {}, {}));
  CHECK(store.pool().in_use() == 2);
  store.clear_ghosts();
  CHECK(store.ghosts().empty());
  CHECK(store.owned().size() == 1);
  CHECK(store.pool().in_use() == 1);
}
