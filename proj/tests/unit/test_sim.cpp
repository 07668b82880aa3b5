#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "generators.hpp"
#include "picforest/sim/simulation.hpp"

using namespace pic;
namespace fs = std::filesystem;

namespace {

RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return load_run_config(ConfigFile::parse(in, "test.cfg"));
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

/// Fresh scratch directory per test case.
fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("picforest_test_sim_" + name);
  fs::remove_all(dir);
  return dir;
}

/// Small rotating square; particles near the corners leave the domain.
RunConfig rotating_square() {
  RunConfig c;
  c.mesh.lower = {-1.0, -1.0};
  c.mesh.upper = {1.0, 1.0};
  c.mesh.nx = 8;
  c.mesh.ny = 8;
  c.mesh.uniform_levels = 1;
  c.field.name = "rigid_rotation";
  c.particles.generator = "reference";
  c.particles.per_cell = 2;
  c.properties.list = {"initial_position", "deformation"};
  c.steps = 12;
  c.cfl = 0.5;
  c.balance.every = 4;
  c.balance.w = 0.05;
  return c;
}

std::size_t csv_rows(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n == 0 ? 0 : n - 1;
}

}  // namespace

TEST_CASE("config: comments, blanks and overrides parse") {
  const RunConfig c = parse_config(
      "# demo\n"
      "\n"
      "run.steps = 7   # trailing comment\n"
      "run.integrator = rk4\n"
      "mesh.nx = 12\n"
      "particles.count = 500\n"
      "properties.list = initial_position, damage\n"
      "physics.rayleigh = 1e5\n");
  CHECK(c.steps == 7);
  CHECK(c.integrator == Scheme::rk4);
  CHECK(c.mesh.nx == 12);
  CHECK(c.particles.count == 500);
  CHECK(c.properties.list == std::vector<std::string>{"initial_position", "damage"});
  CHECK(c.physics.at("rayleigh") == "1e5");
}

TEST_CASE("config: scenario presets fill defaults") {
  const RunConfig c = parse_config("run.scenario = circular_flow\n");
  CHECK(c.mesh.geometry == "annulus");
  CHECK(c.field.name == "rigid_rotation");
  CHECK(parse_config("run.scenario = adaptive_interface\n").mesh.refine == "interface");
  CHECK(error_of("run.scenario = tokamak\n").find("run.scenario") != std::string::npos);
}

TEST_CASE("config: malformed input reports the location or key") {
  CHECK(error_of("run.steps 7\n").find("test.cfg:1") != std::string::npos);
  CHECK(error_of("steps = 7\n").find("test.cfg:1") != std::string::npos);
  CHECK(error_of("run.steps = 1\nrun.steps = 2\n").find("test.cfg:2") != std::string::npos);
  CHECK(error_of("run.steps = many\n").find("run.steps") != std::string::npos);
  CHECK(error_of("run.stepz = 3\n").find("run.stepz: unknown key") != std::string::npos);
  CHECK(error_of("mesh.geometry = torus\n").find("mesh.geometry") != std::string::npos);
}

TEST_CASE("config: an invalid integrator names the key") {
  const std::string e = error_of("run.integrator = leapfrog\n");
  CHECK(e.find("run.integrator") != std::string::npos);
  CHECK(e.find("leapfrog") != std::string::npos);
}

TEST_CASE("config: write then parse reproduces the configuration") {
  for (const char* scenario : {"custom", "circular_flow", "adaptive_interface"}) {
    RunConfig c = scenario_defaults(scenario);
    c.cfl = 0.1 + 1e-12;
    c.field.center = {0.1, -1.0 / 3.0};
    c.physics["note"] = "free text";
    std::ostringstream out;
    write_config(out, c);
    CHECK(parse_config(out.str()) == c);
  }
}

TEST_CASE("output: CSV and binary records round-trip exactly") {
  testgen::Gen gen(11);
  std::vector<ParticleRecord> records;
  for (ParticleId id = 0; id < 50; ++id)
    records.push_back({id * 7 + 3, gen.point({-1, -1}, {1, 1}), {gen.uniform(-1e9, 1e9), 1.0 / 3.0, -0.0}});
  const std::vector<std::string> cols{"a", "b", "c"};
  std::stringstream csv;
  write_records_csv(csv, records, cols);
  CHECK(read_records_csv(csv) == records);
  std::stringstream bin;
  write_records_binary(bin, records, 3);
  CHECK(read_records_binary(bin) == records);
}

TEST_CASE("output: group assignment covers ranks in contiguous blocks") {
  CHECK(effective_groups(4, 8) == 4);
  CHECK(effective_groups(4, 0) == 1);
  for (int p = 1; p <= 9; ++p)
    for (int g = 1; g <= 12; ++g) {
      int prev = 0;
      std::vector<int> sizes(static_cast<std::size_t>(effective_groups(p, g)), 0);
      for (int r = 0; r < p; ++r) {
        const int grp = output_group(r, p, g);
        CHECK(grp >= prev);
        prev = grp;
        ++sizes[static_cast<std::size_t>(grp)];
      }
      const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
      CHECK(*lo >= 1);
      CHECK(*hi - *lo <= 1);
    }
}

TEST_CASE("run: zero steps writes only the initial state") {
  RunConfig c = rotating_square();
  c.steps = 0;
  c.ranks = 2;
  const auto dir = scratch_dir("zero");
  const RunResult r = run_simulation(c, {dir});
  REQUIRE(r.stats.size() == 1);
  CHECK(r.stats[0].alive == r.generated);
  CHECK(fs::exists(dir / "particles_0_0.csv"));
  CHECK(fs::exists(dir / "partition_0.csv"));
  CHECK(fs::exists(dir / "config.txt"));
  int particle_files = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().rfind("particles_", 0) == 0) ++particle_files;
  CHECK(particle_files == 1);
  CHECK(csv_rows(dir / "particles_0_0.csv") == r.generated);
}

TEST_CASE("run: 37 particles on 3 ranks land in one group file") {
  const auto dir = scratch_dir("points");
  fs::create_directories(dir);
  testgen::Gen gen(37);
  {
    std::ofstream pts(dir / "points.csv");
    pts << "x,y\n";
    pts.precision(17);
    for (int i = 0; i < 37; ++i) {
      const Vec2 x = gen.point({0.05, 0.05}, {0.95, 0.95});
      pts << x.x << ',' << x.y << '\n';
    }
  }
  RunConfig c;
  c.ranks = 3;
  c.steps = 0;
  c.particles.generator = "points";
  c.particles.points_file = (dir / "points.csv").string();
  c.output.groups = 1;
  const RunResult r = run_simulation(c, {dir / "out"});
  CHECK(r.generated == 37);
  CHECK(csv_rows(dir / "out" / "particles_0_0.csv") == 37);
  CHECK_FALSE(fs::exists(dir / "out" / "particles_0_1.csv"));
  const auto back = read_particle_step(dir / "out", 0);
  CHECK(back.size() == 37);
}

TEST_CASE("run: more groups than ranks writes one file per rank") {
  RunConfig c = rotating_square();
  c.ranks = 2;
  c.steps = 2;
  c.output.groups = 5;
  c.output.format = "both";
  const auto dir = scratch_dir("groups");
  const RunResult r = run_simulation(c, {dir});
  for (int g = 0; g < 2; ++g) {
    CHECK(fs::exists(particle_file(dir, 2, g, false)));
    CHECK(fs::exists(particle_file(dir, 2, g, true)));
  }
  CHECK_FALSE(fs::exists(particle_file(dir, 2, 2, false)));
  auto back = read_particle_step(dir, 2);
  sort_by_id(back);
  CHECK(back.size() == r.stats.back().alive);
}

TEST_CASE("run: final particles do not depend on the rank count") {
  RunConfig c = rotating_square();
  c.ranks = 1;
  const RunResult one = run_simulation(c, {{}, true});
  // The square's corners rotate out of the domain, so discards are compared too.
  REQUIRE(one.final_records.size() == one.stats.back().alive);
  CHECK(one.stats.back().discarded_total > 0);
  for (int p : {2, 3, 4}) {
    c.ranks = p;
    const RunResult many = run_simulation(c, {{}, true});
    CHECK(many.final_records == one.final_records);
    REQUIRE(many.discarded.size() == one.discarded.size());
    for (std::size_t i = 0; i < one.discarded.size(); ++i) {
      CHECK(many.discarded[i].id == one.discarded[i].id);
      CHECK(many.discarded[i].position == one.discarded[i].position);
    }
    CHECK(many.dt == one.dt);
  }
}

TEST_CASE("run: repeated runs are bitwise identical") {
  RunConfig c = rotating_square();
  c.particles.generator = "random";
  c.particles.count = 400;
  c.particles.sampler = InCellSampler::metropolis_hastings;
  c.ranks = 3;
  const RunResult a = run_simulation(c, {{}, true});
  const RunResult b = run_simulation(c, {{}, true});
  CHECK(a.final_records == b.final_records);
  c.seed = 2;
  CHECK(run_simulation(c, {{}, true}).final_records != a.final_records);
}

TEST_CASE("run: phase times add up to the step time") {
  RunConfig c = rotating_square();
  c.ranks = 2;
  c.steps = 6;
  const RunResult r = run_simulation(c);
  REQUIRE(r.timings.size() == 2 * 7);
  for (const TimingRow& t : r.timings) {
    CHECK(t.wall > 0.0);
    CHECK(std::abs(t.phases.total() - t.wall) <= 0.1 * t.wall);
  }
}

TEST_CASE("run: ledger holds while particles leave the domain") {
  RunConfig c;
  c.mesh.nx = c.mesh.ny = 8;
  c.field.name = "constant";
  c.field.velocity = {1.0, 0.5};
  c.particles.count = 300;
  c.ranks = 3;
  c.steps = 20;
  c.integrator = Scheme::euler;
  const auto dir = scratch_dir("ledger");
  const RunResult r = run_simulation(c, {dir});
  CHECK(r.stats.back().discarded_total > 0);
  for (const StepStats& s : r.stats) CHECK(s.alive + s.discarded_total == r.generated);
  CHECK(r.discarded.size() == r.stats.back().discarded_total);
  CHECK(csv_rows(dir / "stats.csv") == r.stats.size());
  CHECK(csv_rows(dir / "timings.csv") == r.timings.size());
  CHECK(csv_rows(dir / "discarded.csv") == r.discarded.size());
}

TEST_CASE("run: circular flow with the discrete field keeps every particle") {
  RunConfig c = scenario_defaults("circular_flow");
  c.mesh.nx = 32;
  c.mesh.ny = 4;
  c.particles.count = 500;
  c.steps = 10;
  c.ranks = 2;
  c.field.discrete = true;
  const RunResult r = run_simulation(c);
  CHECK(r.stats.back().alive == 500);
  CHECK(r.stats.back().sort.processed > 0);
}

TEST_CASE("run: adaptive interface writes interpolated fields and entrainment") {
  RunConfig c = scenario_defaults("adaptive_interface");
  c.mesh.nx = c.mesh.ny = 4;
  c.mesh.refine_levels = 2;
  c.particles.count = 4000;
  c.steps = 4;
  c.interpolation.every = 2;
  c.interpolation.write = true;
  c.ranks = 2;
  const auto dir = scratch_dir("interface");
  const RunResult r = run_simulation(c, {dir});
  REQUIRE(r.stats.front().entrainment.has_value());
  CHECK(*r.stats.front().entrainment == doctest::Approx(0.0));
  CHECK(r.stats.back().entrainment.has_value());
  CHECK(fs::exists(dir / "interpolated_2.csv"));
  CHECK(csv_rows(dir / "interpolated_4.csv") == r.cells);
}

TEST_CASE("mesh: interface refinement reaches the requested depth only near the curve") {
  MeshConfig m;
  m.upper = {1.0, 1.0};
  m.nx = m.ny = 8;
  m.refine = "interface";
  m.refine_levels = 3;
  m.refine_width = 0.01;
  const Forest f = build_forest(m);
  CHECK(f.max_level() == 3);
  for (const Cell& cell : f.leaves()) {
    const double x = cell.center.x;
    const double y = m.interface_y0 + m.interface_amplitude * std::cos(std::numbers::pi * x);
    if (std::abs(cell.center.y - y) > 0.3) CHECK(cell.key.level == 0);
  }
}

TEST_CASE("benchmark: weak scaling grows the problem with the rank count") {
  RunConfig c = rotating_square();
  c.particles.generator = "random";
  c.particles.count = 200;
  c.steps = 2;
  const std::vector<int> ranks{1, 2};
  const auto rows = scaling_benchmark(c, ranks, BenchMode::weak);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].particles == 2 * rows[0].particles);
  CHECK(rows[1].cells == 2 * rows[0].cells);
  CHECK(rows[0].step_wall > 0.0);
  std::ostringstream out;
  write_bench_csv(out, rows);
  CHECK(out.str().rfind("mode,ranks,particles", 0) == 0);
  CHECK_THROWS_AS(parse_bench_mode("medium"), ConfigError);
}

TEST_CASE("convergence: observed orders match the schemes") {
  ConvergenceSetup s;
  s.dts = {0.1, 0.05, 0.025};
  s.particles = 16;
  for (auto [scheme, order] : {std::pair{Scheme::euler, 1.0}, {Scheme::rk2, 2.0}, {Scheme::rk4, 4.0}}) {
    s.scheme = scheme;
    const auto r = convergence_study(s);
    REQUIRE(r.order.has_value());
    CHECK(*r.order == doctest::Approx(order).epsilon(0.1));
  }
  s.field = "constant";
  s.scheme = Scheme::euler;
  CHECK_FALSE(convergence_study(s).order.has_value());
  s.field = "unsteady_gyre";
  CHECK_THROWS_AS(convergence_study(s), ConfigError);
}
