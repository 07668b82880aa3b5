#include <algorithm>
#include <map>
#include <mutex>
#include <sstream>

#include "doctest.h"
#include "generators.hpp"
#include "picforest/balance/balance.hpp"

using namespace pic;

namespace {

const DomainGeometry kUnitSquare = RectangleDomain{{0.0, 0.0}, {1.0, 1.0}};

struct Record {
  ParticleId id;
  Vec2 location;
  Vec2 reference;
  std::vector<double> props;
  friend bool operator==(const Record&, const Record&) = default;
};

std::vector<Record> records(const ParticleStore& store) {
  std::vector<Record> out;
  store.owned().for_each([&](const CellKey&, const Particle& p) {
    const auto s = store.properties(p);
    out.push_back({p.id, p.location, p.reference_location, {s.begin(), s.end()}});
  });
  return out;
}

void seed_particles(ParticleStore& store, const Forest& f, const RankTopology& t, int n,
                    std::uint64_t seed, BoundingBox region = {{0, 0}, {1, 1}}) {
  testgen::Gen gen(seed);
  for (ParticleId id = 0; id < static_cast<ParticleId>(n); ++id) {
    const Vec2 x = gen.point(region.lower, region.upper);
    const auto loc = f.locate(x);
    if (!loc || !t.owns(loc->leaf)) continue;
    Particle p = store.make_particle(id, x, loc->reference);
    for (std::size_t k = 0; k < store.n_properties(); ++k) store.properties(p)[k] = x.x * static_cast<double>(k + 1);
    store.owned().insert(f.leaf(loc->leaf).key, p);
  }
}

}  // namespace

TEST_CASE("Morton sequence") {
  const Forest f = Forest::build(kUnitSquare, 2, 2);
  std::vector<Vec2> centers;
  for (const Cell& c : f.leaves()) centers.push_back(c.center);
  CHECK(centers == std::vector<Vec2>{{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}});

  const Forest g = Forest::build(kUnitSquare, 3, 3);
  const CellKey target = g.leaf(4).key;
  const Forest r = refine(g, std::span(&target, 1)).forest;
  REQUIRE(r.size() == 12);
  for (unsigned c = 0; c < 4; ++c) CHECK(r.leaf(4 + c).key == child_key(target, c));
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.leaf(i).key == g.leaf(i).key);
  for (std::size_t i = 5; i < 9; ++i) CHECK(r.leaf(i + 3).key == g.leaf(i).key);
}

TEST_CASE("reference rescaling between parent and child") {
  auto [c, ref] = refine_reference({0.25, 0.25});
  CHECK(c == 0);
  CHECK(ref == Vec2{0.5, 0.5});
  auto [c2, ref2] = refine_reference({0.5, 0.5});
  CHECK(c2 == 0);
  CHECK(ref2 == Vec2{1.0, 1.0});
  CHECK(refine_reference({0.75, 0.1}).first == 1);
  CHECK(refine_reference({0.1, 0.75}).first == 2);
  testgen::Gen gen(81);
  for (int i = 0; i < 10000; ++i) {
    const Vec2 x = gen.unit_point();
    const auto [child, r] = refine_reference(x);
    CHECK(reference_inside(r, 0.0));
    CHECK(norm(coarsen_reference(child, r) - x) < 1e-14);
  }
}

TEST_CASE("property: refine then coarsen returns particles to their reference locations") {
  testgen::Gen gen(83);
  for (int trial = 0; trial < 10; ++trial) {
    // One level of refinement on a uniform forest never triggers balancing,
    // so coarsening every new leaf restores the original forest.
    const Forest f = Forest::build(trial % 2 ? DomainGeometry{AnnulusDomain{}} : kUnitSquare, 4, 3);
    ParticleStore store(1);
    ParticleId id = 0;
    for (std::uint32_t i = 0; i < f.size(); ++i) {
      for (int k = 0; k < 5; ++k) {
        const Vec2 ref = gen.unit_point();
        store.owned().insert(f.leaf(i).key, store.make_particle(id++, map_to_real(f.leaf(i).vertices, ref), ref));
      }
    }
    const auto before = records(store);
    std::vector<CellKey> keys;
    for (const Cell& c : f.leaves())
      if (gen.uniform() < 0.5) keys.push_back(c.key);
    const Adaptation up = refine(f, keys);
    transfer_particles(store, f, up);
    CHECK(store.owned().size() == before.size());
    store.owned().for_each([&](const CellKey& k, const Particle& p) {
      REQUIRE(up.forest.is_leaf(k));
      CHECK(reference_inside(p.reference_location, 0.0));
      CHECK(norm(map_to_real(up.forest.cell_vertices(k), p.reference_location) - p.location) < 1e-12);
    });
    std::vector<CellKey> merge;
    for (const Cell& c : up.forest.leaves())
      if (!f.is_leaf(c.key)) merge.push_back(c.key);
    const Adaptation down = coarsen(up.forest, merge);
    REQUIRE(down.forest.size() == f.size());
    transfer_particles(store, up.forest, down);
    auto after = records(store);
    auto sorted = before;
    auto by_id = [](const Record& a, const Record& b) { return a.id < b.id; };
    std::sort(after.begin(), after.end(), by_id);
    std::sort(sorted.begin(), sorted.end(), by_id);
    REQUIRE(after.size() == sorted.size());
    for (std::size_t i = 0; i < after.size(); ++i) {
      CHECK(after[i].location == sorted[i].location);
      CHECK(norm(after[i].reference - sorted[i].reference) < 1e-14);
    }
  }
}

TEST_CASE("repartitioning") {
  const Forest f = Forest::build(kUnitSquare, 8, 8);
  SUBCASE("uniform particles with W = 0 keep the partition") {
    World world(4);
    world.run([&](Comm& c) {
      RankTopology t(f, Partition::uniform(f.size(), 4), c.rank());
      ParticleStore store(0);
      seed_particles(store, f, t, 4000, 1);
      for (int i = 0; i < 3; ++i) {
        MigrationStats st;
        t = repartition_and_migrate(c, store, f, t, 0.0, &st);
        if (st.leaves_changed_owner != 0 || !(t.partition() == Partition::uniform(f.size(), 4)))
          throw Error("partition changed");
      }
    });
  }
  SUBCASE("one heavy cell isolates its rank") {
    std::vector<Partition> parts(4);
    World world(4);
    world.run([&](Comm& c) {
      RankTopology t(f, Partition::uniform(f.size(), 4), c.rank());
      ParticleStore store(0);
      const Cell& heavy = f.leaf(37);
      seed_particles(store, f, t, 5000, 2, heavy.box);
      t = repartition_and_migrate(c, store, f, t, 10.0);
      parts[static_cast<std::size_t>(c.rank())] = t.partition();
    });
    const Partition& p = parts[0];
    const int owner = p.owner(37);
    CHECK(p.end(owner) - p.begin(owner) <= 2);
  }
  SUBCASE("migration preserves every particle bitwise") {
    std::vector<Record> before, after;
    std::mutex m;
    World world(4, true);
    world.run([&](Comm& c) {
      RankTopology t(f, Partition::uniform(f.size(), 4), c.rank());
      ParticleStore store(3);
      seed_particles(store, f, t, 3000, 3, {{0.0, 0.0}, {0.4, 0.5}});
      {
        std::lock_guard lock(m);
        const auto r = records(store);
        before.insert(before.end(), r.begin(), r.end());
      }
      c.barrier();
      MigrationStats st;
      t = repartition_and_migrate(c, store, f, t, 1.0, &st);
      store.owned().for_each([&](const CellKey& k, const Particle&) {
        if (!t.owns(*f.find(k))) throw Error("particle on a foreign cell");
      });
      std::lock_guard lock(m);
      const auto r = records(store);
      after.insert(after.end(), r.begin(), r.end());
    });
    auto by_id = [](const Record& a, const Record& b) { return a.id < b.id; };
    std::sort(before.begin(), before.end(), by_id);
    std::sort(after.begin(), after.end(), by_id);
    CHECK(before.size() > 1000);
    CHECK(before == after);
  }
}

TEST_CASE("imbalance report") {
  const std::vector<std::uint64_t> cells{4, 4, 4, 4};
  const auto even = imbalance_from_counts(cells, std::vector<std::uint64_t>{10, 10, 10, 10}, 0.5);
  CHECK(even.cell_ratio == 1.0);
  CHECK(even.particle_ratio == 1.0);
  CHECK(even.cost_ratio == 1.0);
  const auto skewed = imbalance_from_counts(cells, std::vector<std::uint64_t>{40, 0, 0, 0}, 0.0);
  CHECK(skewed.particle_ratio == 4.0);
  CHECK(skewed.cost_ratio == 1.0);
  const auto none = imbalance_from_counts(cells, std::vector<std::uint64_t>{0, 0, 0, 0}, 1.0);
  CHECK(none.particle_ratio == 1.0);

  const Forest f = Forest::build(kUnitSquare, 2, 2);
  std::ostringstream csv;
  const std::vector<std::uint64_t> leaf_particles{3, 0, 1, 2};
  write_partition_csv(csv, f, Partition::uniform(4, 2), leaf_particles, 0.5);
  CHECK(csv.str() == "leaf_morton_rank,level,index,owner,particles,cost\n0,0,0,0,3,2.5\n1,0,1,0,0,1\n2,0,2,1,1,1.5\n3,0,3,1,2,2\n");
}
