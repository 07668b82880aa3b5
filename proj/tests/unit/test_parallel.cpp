#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "generators.hpp"
#include "picforest/parallel/runtime.hpp"
#include "picforest/parallel/topology.hpp"

using namespace pic;

namespace {

Bytes bytes_of(int v) {
  Bytes b(sizeof v);
  std::memcpy(b.data(), &v, sizeof v);
  return b;
}

int int_of(const Bytes& b) {
  int v = 0;
  std::memcpy(&v, b.data(), sizeof v);
  return v;
}

}  // namespace

TEST_CASE("collectives are deterministic and rank ordered") {
  World world(4);
  std::vector<std::uint64_t> scans(4);
  std::vector<double> sums(4);
  world.run([&](Comm& c) {
    const auto r = static_cast<std::size_t>(c.rank());
    scans[r] = c.exclusive_scan(r + 1);
    sums[r] = c.allreduce_sum(0.1 * static_cast<double>(r + 1));
    const auto all = c.allgather(c.rank() * 10);
    if (all != std::vector<int>{0, 10, 20, 30}) throw Error("allgather mismatch");
  });
  CHECK(scans == std::vector<std::uint64_t>{0, 1, 3, 6});
  for (double s : sums) CHECK(s == sums[0]);
  CHECK(sums[0] == ((0.1 + 0.2) + 0.30000000000000004) + 0.4);
}

TEST_CASE("point to point is FIFO per pair and traced") {
  World world(3, true);
  std::vector<std::vector<int>> got(3);
  world.run([&](Comm& c) {
    c.set_trace_context(7, "test");
    const int next = (c.rank() + 1) % 3;
    const int prev = (c.rank() + 2) % 3;
    for (int i = 0; i < 5; ++i) c.send(next, 1, bytes_of(c.rank() * 100 + i), 1);
    for (int i = 0; i < 5; ++i) got[static_cast<std::size_t>(c.rank())].push_back(int_of(c.recv(prev, 1)));
  });
  CHECK(got[0] == std::vector<int>{200, 201, 202, 203, 204});
  CHECK(got[1] == std::vector<int>{0, 1, 2, 3, 4});
  REQUIRE(world.trace().size() == 15);
  CHECK(world.trace()[0].step == 7);
  CHECK(world.trace()[0].phase == "test");
  CHECK(world.trace()[0].bytes == sizeof(int));
  std::ostringstream csv;
  world.write_trace_csv(csv);
  CHECK(csv.str().starts_with("step,phase,src,dst,count,bytes\n7,test,0,1,1,4\n"));
}

TEST_CASE("a failing rank releases the others and reports its id") {
  World world(4);
  try {
    world.run([](Comm& c) {
      if (c.rank() == 2) throw ProtocolError("bad length");
      c.barrier();
      c.recv((c.rank() + 1) % 4, 5);
    });
    FAIL("expected RankFailure");
  } catch (const RankFailure& e) {
    CHECK(e.rank() == 2);
    CHECK(std::string(e.what()).find("bad length") != std::string::npos);
  }
  // The world is reusable after a failure.
  int ran = 0;
  World single(1);
  single.run([&](Comm& c) {
    c.barrier();
    ++ran;
  });
  CHECK(ran == 1);
}

TEST_CASE("tag mismatch is a protocol error") {
  World world(2);
  CHECK_THROWS_AS(world.run([](Comm& c) {
    if (c.rank() == 0) c.send(1, 1, {});
    else c.recv(0, 2);
  }),
                  RankFailure);
}

TEST_CASE("partition examples") {
  const Partition two = Partition::uniform(4, 2);
  CHECK(two.starts == std::vector<std::uint32_t>{0, 2, 4});
  const std::vector<double> costs{1, 3, 1, 1};
  const Partition p = partition_by_cost(costs, 2);
  CHECK(p.owner(0) == 0);
  CHECK(p.owner(1) == 0);
  CHECK(p.owner(2) == 1);
  CHECK(p.owner(3) == 1);
}

TEST_CASE("property: equal costs give the equal-cell split") {
  for (int ranks = 1; ranks <= 8; ++ranks) {
    for (std::size_t per = 1; per <= 5; ++per) {
      const Partition p = Partition::uniform(per * static_cast<std::size_t>(ranks), ranks);
      for (int r = 0; r <= ranks; ++r) CHECK(p.starts[static_cast<std::size_t>(r)] == per * static_cast<std::size_t>(r));
    }
  }
}

TEST_CASE("property: partitions are contiguous and cover everything") {
  testgen::Gen gen(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int ranks = gen.integer(1, 9);
    std::vector<double> costs(static_cast<std::size_t>(gen.integer(0, 60)));
    for (double& c : costs) c = 1.0 + (gen.uniform() < 0.2 ? gen.uniform(0, 50) : 0.0);
    const Partition p = partition_by_cost(costs, ranks);
    REQUIRE(p.ranks() == ranks);
    CHECK(p.starts.front() == 0);
    CHECK(p.starts.back() == costs.size());
    CHECK(std::is_sorted(p.starts.begin(), p.starts.end()));
    for (std::uint32_t i = 0; i < costs.size(); ++i) {
      const int o = p.owner(i);
      CHECK(i >= p.begin(o));
      CHECK(i < p.end(o));
    }
  }
}

TEST_CASE("topology ghosts and neighbors") {
  testgen::Gen gen(8);
  const Forest f = gen.random_forest(RectangleDomain{}, 6, 6, 2);
  const int ranks = 4;
  const Partition p = Partition::uniform(f.size(), ranks);
  std::vector<RankTopology> topo;
  for (int r = 0; r < ranks; ++r) topo.emplace_back(f, p, r);
  for (int r = 0; r < ranks; ++r) {
    for (int n : topo[static_cast<std::size_t>(r)].neighbors()) {
      const auto& back = topo[static_cast<std::size_t>(n)].neighbors();
      CHECK(std::find(back.begin(), back.end(), r) != back.end());
      // Cells I send to n are exactly n's ghosts owned by me.
      std::vector<std::uint32_t> expected;
      for (std::uint32_t g : topo[static_cast<std::size_t>(n)].ghost_leaves())
        if (p.owner(g) == r) expected.push_back(g);
      CHECK(topo[static_cast<std::size_t>(r)].boundary_for(n) == expected);
    }
    for (std::uint32_t g : topo[static_cast<std::size_t>(r)].ghost_leaves()) CHECK_FALSE(topo[static_cast<std::size_t>(r)].owns(g));
  }
  const RankTopology single(f, Partition::uniform(f.size(), 1), 0);
  CHECK(single.ghost_leaves().empty());
  CHECK(single.neighbors().empty());
}
