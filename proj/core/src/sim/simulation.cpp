#include "picforest/sim/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "picforest/transport/wire.hpp"

namespace pic {

double PhaseTimes::total() const {
  double s = 0.0;
  for (double v : values()) s += v;
  return s;
}

PhaseTimes& PhaseTimes::operator+=(const PhaseTimes& o) {
  generate += o.generate;
  advect += o.advect;
  sort += o.sort;
  exchange += o.exchange;
  properties += o.properties;
  interpolate += o.interpolate;
  repartition += o.repartition;
  output += o.output;
  return *this;
}

namespace {

constexpr int kTagRecords = 201;
constexpr int kTagInterpolated = 202;

using Clock = std::chrono::steady_clock;

/// Phase boundaries are rank-wide barriers, so every rank sees the same
/// phase split and the laps of a step add up to its wall time.
class PhaseClock {
 public:
  explicit PhaseClock(Comm& comm) : comm_(comm) {}

  void start() {
    comm_.barrier();
    mark_ = Clock::now();
    begin_ = mark_;
  }
  double lap() {
    comm_.barrier();
    const auto now = Clock::now();
    const double d = std::chrono::duration<double>(now - mark_).count();
    mark_ = now;
    return d;
  }
  double elapsed() const { return std::chrono::duration<double>(mark_ - begin_).count(); }

 private:
  Comm& comm_;
  Clock::time_point begin_;
  Clock::time_point mark_;
};

struct RankCounts {
  std::uint64_t particles = 0;
  std::uint64_t cells = 0;
  std::uint64_t discarded = 0;
  std::uint64_t changed_owner = 0;
  SortStats sort;
};

Bytes pack_records(std::span<const ParticleRecord> records, std::size_t n_values) {
  const std::size_t stride = 3 + n_values;
  Bytes out(records.size() * stride * 8);
  std::byte* w = out.data();
  for (const ParticleRecord& r : records) {
    std::memcpy(w, &r.id, 8);
    std::memcpy(w + 8, &r.location.x, 8);
    std::memcpy(w + 16, &r.location.y, 8);
    std::memcpy(w + 24, r.values.data(), 8 * n_values);
    w += stride * 8;
  }
  return out;
}

std::vector<ParticleRecord> unpack_records(std::span<const std::byte> in, std::size_t n_values) {
  const std::size_t stride = (3 + n_values) * 8;
  if (in.size() % stride != 0) throw ProtocolError("particle record payload has a partial record");
  std::vector<ParticleRecord> out(in.size() / stride);
  const std::byte* r = in.data();
  for (ParticleRecord& rec : out) {
    std::memcpy(&rec.id, r, 8);
    std::memcpy(&rec.location.x, r + 8, 8);
    std::memcpy(&rec.location.y, r + 16, 8);
    rec.values.resize(n_values);
    std::memcpy(rec.values.data(), r + 24, 8 * n_values);
    r += stride;
  }
  return out;
}

/// Every rank's records on rank 0 (index = rank); empty elsewhere.
std::vector<std::vector<ParticleRecord>> gather_records(Comm& comm, const ParticleStore& store,
                                                        std::size_t n_values) {
  auto mine = collect_records(store, n_values);
  std::vector<std::vector<ParticleRecord>> all;
  if (comm.rank() != 0) {
    const auto count = mine.size();
    comm.send(0, kTagRecords, pack_records(mine, n_values), count);
    return all;
  }
  all.resize(static_cast<std::size_t>(comm.size()));
  all[0] = std::move(mine);
  for (int r = 1; r < comm.size(); ++r)
    all[static_cast<std::size_t>(r)] = unpack_records(comm.recv(r, kTagRecords), n_values);
  return all;
}

std::string drop_first_line(const std::string& s) {
  const auto nl = s.find('\n');
  return nl == std::string::npos ? std::string() : s.substr(nl + 1);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  return out;
}

bool is_output_step(const RunConfig& c, int step) {
  if (step == 0 || step == c.steps) return true;
  return c.output.every > 0 && step % c.output.every == 0;
}

bool is_interpolation_step(const RunConfig& c, int step) {
  if (c.interpolation.every <= 0) return false;
  return step == 0 || step == c.steps || step % c.interpolation.every == 0;
}

/// State shared read-only by all rank threads, plus per-rank result slots
/// that only their own rank writes.
struct Shared {
  const RunConfig& config;
  const RunOptions& options;
  const Forest& forest;
  const AnalyticField& field;
  const PropertyManager& properties;
  std::vector<std::vector<TimingRow>> timings;
  std::vector<std::vector<DiscardRecord>> discarded;
  std::vector<StepStats> stats;
  std::vector<ParticleRecord> final_records;
  Partition final_partition;
  double dt = 0.0;
  std::uint64_t generated = 0;
};

std::uint64_t generate(Comm& comm, ParticleStore& store, const Shared& sh,
                       const RankTopology& topology) {
  const RunConfig& c = sh.config;
  const ParticleInit init = sh.properties.initializer(store);
  const std::size_t before = store.owned().size();
  if (c.particles.generator == "random") {
    generate_random(comm, store, sh.forest, topology, make_density(c), c.particles.count,
                    c.particles.sampler, c.seed, init);
  } else if (c.particles.generator == "reference") {
    const int k = c.particles.per_cell;
    std::vector<Vec2> refs;
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < k; ++i) refs.push_back({(i + 0.5) / k, (j + 0.5) / k});
    insert_reference_per_cell(comm, store, sh.forest, topology, refs, init);
  } else {
    std::ifstream in(c.particles.points_file);
    if (!in) throw ConfigError("particles.points_file: cannot read " + c.particles.points_file);
    const auto points = read_points_csv(in);
    insert_prescribed(comm, store, sh.forest, topology, points, init);
  }
  return store.owned().size() - before;
}

void rank_main(Comm& comm, Shared& sh) {
  const RunConfig& c = sh.config;
  const Forest& forest = sh.forest;
  const PropertyManager& props = sh.properties;
  const int rank = comm.rank();
  const int ranks = comm.size();
  const bool write = !sh.options.output_dir.empty();
  const auto& dir = sh.options.output_dir;
  const auto columns = [&] {
    auto all = props.column_names();
    all.resize(props.scratch_offset());
    return all;
  }();
  const std::size_t n_out = columns.size();

  ParticleStore store(props.n_properties());
  RankTopology topology(forest, Partition::uniform(forest.size(), ranks), rank);
  PhaseClock clock(comm);
  auto& timings = sh.timings[static_cast<std::size_t>(rank)];
  auto& discarded = sh.discarded[static_cast<std::size_t>(rank)];
  std::uint64_t discarded_total = 0;
  std::uint64_t generated = 0;

  const AnalyticField& analytic = sh.field;
  std::shared_ptr<const DiscreteField> snapshot;

  const auto step_stats = [&](int step, double t, const SortStats& sort,
                              std::uint64_t changed) {
    RankCounts mine;
    mine.particles = store.owned().size();
    mine.cells = topology.end() - topology.begin();
    mine.discarded = sort.discarded();
    mine.changed_owner = changed;
    mine.sort = sort;
    const auto all = comm.allgather(mine);
    StepStats s;
    s.step = step;
    s.time = t;
    std::uint64_t changed_total = 0;
    for (const RankCounts& rc : all) {
      s.alive += rc.particles;
      discarded_total += rc.discarded;
      changed_total += rc.changed_owner;
      s.sort += rc.sort;
      s.rank_particles.push_back(rc.particles);
      s.rank_cells.push_back(rc.cells);
    }
    s.discarded_total = discarded_total;
    s.leaves_changed_owner = changed_total;
    const auto rep = imbalance_from_counts(s.rank_cells, s.rank_particles, c.balance.w);
    s.particle_ratio = rep.particle_ratio;
    s.cost_ratio = rep.cost_ratio;
    if (s.alive + s.discarded_total != generated)
      throw Error("particle ledger broken at step " + std::to_string(step) + ": " +
                  std::to_string(s.alive) + " alive + " + std::to_string(s.discarded_total) +
                   " discarded != " + std::to_string(generated) + " generated");
    return s;
  };

  const auto interpolate = [&](int step, StepStats& s) {
    update_ghost_particles(comm, store, forest, topology);
    if (props.has(c.interpolation.property)) {
      const auto cells = interpolate_to_mesh(store, forest, topology, props, c.interpolation.property,
                                             c.interpolation.scheme, c.interpolation.mode);
      if (write && c.interpolation.write) {
        std::ostringstream text;
        text.precision(17);
        write_interpolated_csv(text, cells);
        if (rank != 0) {
          const std::string body = drop_first_line(text.str());
          Bytes b(body.size());
          std::memcpy(b.data(), body.data(), body.size());
          comm.send(0, kTagInterpolated, std::move(b));
        } else {
          auto out = open_output(dir / ("interpolated_" + std::to_string(step) + ".csv"));
          out << text.str();
          for (int r = 1; r < ranks; ++r) {
            const Bytes b = comm.recv(r, kTagInterpolated);
            out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
          }
        }
      }
    }
    if (props.has("composition")) s.entrainment = entrainment(comm, store, forest, topology, props);
  };

  const auto output = [&](int step, double t, const VelocityField& field) {
    props.sample(store, forest, field, t);
    if (write && c.output.format != "none") {
      const auto per_rank = gather_records(comm, store, n_out);
      if (rank == 0)
        write_particle_groups(dir, step, per_rank, c.output.groups, c.output.format, columns);
    }
    if (write && c.output.partition) {
      const auto counts = global_leaf_counts(comm, store, forest);
      if (rank == 0) {
        auto out = open_output(dir / ("partition_" + std::to_string(step) + ".csv"));
        write_partition_csv(out, forest, topology.partition(), counts, c.balance.w);
      }
    }
  };

  const auto log = [&](const StepStats& s) {
    if (rank == 0 && sh.options.log)
      *sh.options.log << "step " << s.step << " t=" << s.time << " alive=" << s.alive
                      << " discarded=" << s.discarded_total << '\n';
  };

  // Step 0: generation, initial partition, initial state.
  TimingRow row{0, rank, {}, 0.0};
  clock.start();
  const std::uint64_t local_generated = generate(comm, store, sh, topology);
  generated = comm.allreduce_sum(local_generated);
  row.phases.generate = clock.lap();
  std::uint64_t changed = 0;
  if (c.balance.every > 0) {
    MigrationStats ms;
    topology = repartition_and_migrate(comm, store, forest, topology, c.balance.w, &ms);
    changed = ms.leaves_changed_owner;
  }
  row.phases.repartition = clock.lap();
  if (rank == 0) sh.generated = generated;
  const double dt = c.dt > 0.0 ? c.dt : compute_cfl_dt(comm, analytic, forest, topology, c.cfl, 0.0);
  if (rank == 0) sh.dt = dt;

  StepStats s0 = step_stats(0, 0.0, SortStats{}, changed);
  row.phases.generate += clock.lap();
  if (is_interpolation_step(c, 0)) interpolate(0, s0);
  row.phases.interpolate = clock.lap();
  if (c.field.discrete) snapshot = std::make_shared<DiscreteField>(DiscreteField::sample(forest, analytic, 0.0));
  if (is_output_step(c, 0)) output(0, 0.0, analytic);
  row.phases.output = clock.lap();
  row.wall = clock.elapsed();
  timings.push_back(row);
  if (rank == 0) sh.stats.push_back(s0);
  log(s0);

  for (int n = 1; n <= c.steps; ++n) {
    const double t = (n - 1) * dt;
    const double t_new = n * dt;
    row = TimingRow{n, rank, {}, 0.0};
    clock.start();
    comm.set_trace_context(n, "transport");

    std::unique_ptr<TimeInterpolatedField> blended;
    const VelocityField* field = &analytic;
    if (c.field.discrete) {
      auto next = std::make_shared<DiscreteField>(DiscreteField::sample(forest, analytic, t_new));
      blended = std::make_unique<TimeInterpolatedField>(t, snapshot, t_new, next);
      snapshot = std::move(next);
      field = blended.get();
    }

    SortStats sort;
    for (int stage = 0; stage < substep_count(c.integrator); ++stage) {
      advect_substep(store, forest, *field, c.integrator, stage, t, dt, props.scratch_offset());
      row.phases.advect += clock.lap();
      Outboxes outboxes;
      sort += sort_into_cells(store, forest, topology, outboxes, discarded);
      row.phases.sort += clock.lap();
      const auto inbox = neighbor_exchange(comm, topology, outboxes, store.n_properties());
      receive_particles(store, forest, topology, inbox, sort, discarded);
      row.phases.exchange += clock.lap();
    }

    props.update(store, forest, *field, t_new, dt);
    row.phases.properties = clock.lap();

    changed = 0;
    if (c.balance.every > 0 && n % c.balance.every == 0) {
      comm.set_trace_context(n, "repartition");
      MigrationStats ms;
      topology = repartition_and_migrate(comm, store, forest, topology, c.balance.w, &ms);
      changed = ms.leaves_changed_owner;
    }
    row.phases.repartition = clock.lap();

    StepStats s = step_stats(n, t_new, sort, changed);
    if (is_interpolation_step(c, n)) interpolate(n, s);
    row.phases.interpolate = clock.lap();

    if (is_output_step(c, n)) output(n, t_new, *field);
    row.phases.output = clock.lap();
    row.wall = clock.elapsed();
    timings.push_back(row);
    if (is_output_step(c, n)) log(s);
    if (rank == 0) sh.stats.push_back(std::move(s));
  }

  if (sh.options.keep_final_records) {
    auto per_rank = gather_records(comm, store, n_out);
    if (rank == 0) {
      for (auto& v : per_rank) sh.final_records.insert(sh.final_records.end(), v.begin(), v.end());
      sort_by_id(sh.final_records);
    }
  }
  if (rank == 0) sh.final_partition = topology.partition();
}

void check_ranks(int ranks) {
  if (ranks < 1) throw ConfigError("run.ranks: must be at least 1");
}

}  // namespace

std::vector<CellKey> interface_cells(const Forest& forest, const MeshConfig& m) {
  const double lx = m.upper.x - m.lower.x;
  const auto curve = [&](double x) {
    return m.interface_y0 + m.interface_amplitude * std::cos(std::numbers::pi * (x - m.lower.x) / lx);
  };
  std::vector<CellKey> keys;
  for (const Cell& cell : forest.leaves()) {
    // Range of the curve over the box's x extent, sampled finely enough for
    // boxes narrower than half a period.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    constexpr int kSamples = 16;
    for (int i = 0; i <= kSamples; ++i) {
      const double x = cell.box.lower.x + (cell.box.upper.x - cell.box.lower.x) * i / kSamples;
      lo = std::min(lo, curve(x));
      hi = std::max(hi, curve(x));
    }
    if (cell.box.upper.y >= lo - m.refine_width && cell.box.lower.y <= hi + m.refine_width)
      keys.push_back(cell.key);
  }
  return keys;
}

Forest build_forest(const MeshConfig& m) {
  DomainGeometry geometry;
  if (m.geometry == "annulus")
    geometry = AnnulusDomain{m.r_inner, m.r_outer, {0.0, 0.0}};
  else
    geometry = RectangleDomain{m.lower, m.upper};
  Forest forest = Forest::build(geometry, m.nx, m.ny, m.uniform_levels);
  if (m.refine == "interface") {
    for (unsigned l = 0; l < m.refine_levels; ++l) {
      const auto keys = interface_cells(forest, m);
      if (keys.empty()) break;
      forest = refine(forest, keys).forest;
    }
  }
  return forest;
}

AnalyticField make_field(const RunConfig& c) {
  const FieldConfig& f = c.field;
  if (f.name == "rigid_rotation") return AnalyticField::rigid_rotation(f.omega, f.center);
  if (f.name == "shear") return AnalyticField::shear(f.gamma);
  if (f.name == "constant") return AnalyticField::constant(f.velocity);
  if (f.name == "differential_rotation") return AnalyticField::differential_rotation(f.omega, f.k, f.center);
  if (f.name == "unsteady_gyre")
    return AnalyticField::unsteady_gyre(f.amplitude, f.omega_t, c.mesh.upper.x - c.mesh.lower.x,
                                        c.mesh.upper.y - c.mesh.lower.y);
  throw ConfigError("field.name: unknown field '" + f.name + "'");
}

Density make_density(const RunConfig& c) {
  const ParticleConfig& p = c.particles;
  if (p.density == "uniform") return [](Vec2) { return 1.0; };
  if (p.density == "band") {
    const double lo = p.band_inner, hi = p.band_outer;
    return [lo, hi](Vec2 x) {
      const double r = norm(x);
      return r >= lo && r <= hi ? 1.0 : 0.0;
    };
  }
  if (p.density == "layer") {
    const double top = p.layer_top;
    return [top](Vec2 x) { return x.y <= top ? 1.0 : 0.0; };
  }
  throw ConfigError("particles.density: unknown density '" + p.density + "'");
}

PropertyManager make_properties(const RunConfig& c) {
  const PropertyConfig& p = c.properties;
  PropertyManager m;
  for (const std::string& name : p.list) {
    if (name == "initial_position") {
      m.add(std::make_shared<InitialPositionProperty>());
    } else if (name == "composition") {
      const double top = p.composition_top;
      m.add(std::make_shared<CompositionProperty>([top](Vec2 x) { return x.y <= top ? 1.0 : 0.0; }));
    } else if (name == "damage") {
      m.add(std::make_shared<DamageProperty>(p.damage_alpha, p.damage_beta, p.damage_initial));
    } else if (name == "deformation") {
      m.add(std::make_shared<DeformationProperty>(p.deformation_update == "forward_euler"
                                                      ? DeformationProperty::Update::forward_euler
                                                      : DeformationProperty::Update::exponential));
    } else if (name == "velocity") {
      m.add(std::make_shared<VelocitySampleProperty>());
    } else {
      throw ConfigError("properties.list: unknown property '" + name + "'");
    }
  }
  m.reserve_integrator_scratch(scratch_size(c.integrator));
  return m;
}

RunResult run_simulation(const RunConfig& config, const RunOptions& options) {
  check_ranks(config.ranks);
  if (config.steps < 0) throw ConfigError("run.steps: must not be negative");
  const Forest forest = build_forest(config.mesh);
  const AnalyticField field = make_field(config);
  const PropertyManager props = make_properties(config);
  if (!options.output_dir.empty()) {
    std::filesystem::create_directories(options.output_dir);
    auto out = open_output(options.output_dir / "config.txt");
    write_config(out, config);
  }

  const auto P = static_cast<std::size_t>(config.ranks);
  Shared sh{config, options, forest, field, props, std::vector<std::vector<TimingRow>>(P),
            std::vector<std::vector<DiscardRecord>>(P), {}, {}, {}, 0.0, 0};
  World world(config.ranks);
  world.run([&](Comm& comm) { rank_main(comm, sh); });

  RunResult result;
  result.config = config;
  result.dt = sh.dt;
  result.cells = forest.size();
  result.generated = sh.generated;
  result.stats = std::move(sh.stats);
  for (const StepStats& s : result.stats) result.totals += s.sort;
  for (int n = 0; n <= config.steps; ++n)
    for (std::size_t r = 0; r < P; ++r)
      if (static_cast<std::size_t>(n) < sh.timings[r].size())
        result.timings.push_back(sh.timings[r][static_cast<std::size_t>(n)]);
  for (auto& d : sh.discarded) result.discarded.insert(result.discarded.end(), d.begin(), d.end());
  std::sort(result.discarded.begin(), result.discarded.end(),
            [](const DiscardRecord& a, const DiscardRecord& b) { return a.id < b.id; });
  result.final_records = std::move(sh.final_records);
  result.final_partition = std::move(sh.final_partition);

  if (!options.output_dir.empty()) {
    auto stats = open_output(options.output_dir / "stats.csv");
    write_stats_csv(stats, result.stats);
    auto timings = open_output(options.output_dir / "timings.csv");
    write_timings_csv(timings, result.timings);
    auto disc = open_output(options.output_dir / "discarded.csv");
    write_discard_log(disc, result.discarded);
  }
  return result;
}

void write_stats_csv(std::ostream& out, std::span<const StepStats> stats) {
  out << "step,time,alive,discarded_total,processed,kept,moved_local,sent,received,"
         "discarded_out_of_domain,discarded_unreachable,first_candidate_hits,neighbor_hits,"
         "particle_ratio,cost_ratio,leaves_changed_owner,entrainment\n";
  for (const StepStats& s : stats) {
    out << s.step << ',' << s.time << ',' << s.alive << ',' << s.discarded_total << ','
        << s.sort.processed << ',' << s.sort.kept << ',' << s.sort.moved_local << ','
        << s.sort.sent << ',' << s.sort.received << ',' << s.sort.discarded_out_of_domain << ','
        << s.sort.discarded_unreachable << ',' << s.sort.first_candidate_hits << ','
        << s.sort.neighbor_hits << ',' << s.particle_ratio << ',' << s.cost_ratio << ','
        << s.leaves_changed_owner << ',';
    if (s.entrainment) out << *s.entrainment;
    out << '\n';
  }
}

void write_timings_csv(std::ostream& out, std::span<const TimingRow> timings) {
  out << "step,rank";
  for (auto name : PhaseTimes::names) out << ',' << name;
  out << ",wall\n";
  for (const TimingRow& row : timings) {
    out << row.step << ',' << row.rank;
    for (double v : row.phases.values()) out << ',' << v;
    out << ',' << row.wall << '\n';
  }
}

BenchMode parse_bench_mode(std::string_view name) {
  if (name == "strong") return BenchMode::strong;
  if (name == "weak") return BenchMode::weak;
  throw ConfigError("unknown scaling mode '" + std::string(name) + "' (strong|weak)");
}

std::vector<BenchRow> scaling_benchmark(const RunConfig& base, std::span<const int> ranks,
                                        BenchMode mode, std::ostream* log) {
  std::vector<BenchRow> rows;
  for (const int p : ranks) {
    check_ranks(p);
    RunConfig c = base;
    c.ranks = p;
    c.output.format = "none";
    c.output.partition = false;
    c.interpolation.write = false;
    if (mode == BenchMode::weak) {
      c.particles.count *= static_cast<std::uint64_t>(p);
      c.mesh.nx *= p;
    }
    const RunResult r = run_simulation(c);
    BenchRow row;
    row.mode = mode;
    row.ranks = p;
    row.particles = r.generated;
    row.cells = r.cells;
    row.steps = c.steps;
    // Slowest rank per phase and step, averaged over the time steps.
    for (int n = 1; n <= c.steps; ++n) {
      PhaseTimes worst;
      double wall = 0.0;
      for (const TimingRow& t : r.timings) {
        if (t.step != n) continue;
        auto v = t.phases.values();
        auto w = worst.values();
        for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(w[i], v[i]);
        worst = {w[0], w[1], w[2], w[3], w[4], w[5], w[6], w[7]};
        wall = std::max(wall, t.wall);
      }
      row.per_step += worst;
      row.step_wall += wall;
    }
    if (c.steps > 0) {
      const double inv = 1.0 / c.steps;
      auto v = row.per_step.values();
      for (double& x : v) x *= inv;
      row.per_step = {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
      row.step_wall *= inv;
    }
    if (log)
      *log << (mode == BenchMode::strong ? "strong" : "weak") << " P=" << p
           << " step=" << row.step_wall << " s\n";
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out << "mode,ranks,particles,cells,steps";
  for (auto name : PhaseTimes::names) out << ',' << name;
  out << ",step_wall,speedup,efficiency\n";
  const double base_wall = rows.empty() ? 0.0 : rows.front().step_wall;
  const int base_ranks = rows.empty() ? 1 : rows.front().ranks;
  for (const BenchRow& r : rows) {
    out << (r.mode == BenchMode::strong ? "strong" : "weak") << ',' << r.ranks << ','
        << r.particles << ',' << r.cells << ',' << r.steps;
    for (double v : r.per_step.values()) out << ',' << v;
    // Strong: T1 / TP and speedup per rank. Weak: T1 / TP is the efficiency.
    const double ratio = r.step_wall > 0.0 ? base_wall / r.step_wall : 0.0;
    const double rel = static_cast<double>(r.ranks) / base_ranks;
    const double speedup = r.mode == BenchMode::strong ? ratio : ratio * rel;
    out << ',' << r.step_wall << ',' << speedup << ',' << speedup / rel << '\n';
  }
}

ConvergenceResult convergence_study(const ConvergenceSetup& s) {
  if (s.dts.empty()) throw ConfigError("convergence study needs at least one dt");
  if (s.particles < 1) throw ConfigError("convergence study needs at least one particle");
  AnalyticField field = AnalyticField::by_name(s.field);
  if (!field.trajectory({0.1, 0.1}, 0.0, 0.1))
    throw ConfigError("field '" + s.field + "' has no closed-form trajectory");

  // Start points inside the disc of radius 0.6; every supported flow keeps
  // them inside [-2, 2]^2 up to t = 1.
  constexpr double kHalf = 2.0;
  const int n_cells = std::max(1, static_cast<int>(std::lround(2.0 * kHalf / s.h)));
  const Forest forest =
      Forest::build(RectangleDomain{{-kHalf, -kHalf}, {kHalf, kHalf}}, n_cells, n_cells);
  std::vector<Vec2> starts;
  for (int i = 0; i < s.particles; ++i) {
    const double r = 0.6 * std::sqrt((i + 0.5) / s.particles);
    const double a = i * std::numbers::pi * (3.0 - std::sqrt(5.0));
    starts.push_back({r * std::cos(a), r * std::sin(a)});
  }
  std::shared_ptr<const DiscreteField> discrete;
  if (s.discrete) discrete = std::make_shared<DiscreteField>(DiscreteField::sample(forest, field, 0.0));
  const VelocityField& used = s.discrete ? static_cast<const VelocityField&>(*discrete) : field;

  ConvergenceResult result;
  for (const double dt : s.dts) {
    if (!(dt > 0.0)) throw ConfigError("convergence dt must be positive");
    const int steps = static_cast<int>(std::lround(s.t_end / dt));
    if (steps < 1 || std::abs(steps * dt - s.t_end) > 1e-9 * s.t_end)
      throw ConfigError("dt " + std::to_string(dt) + " does not divide t_end");
    double err = 0.0;
    World world(1);
    world.run([&](Comm& comm) {
      ParticleStore store(scratch_size(s.scheme));
      RankTopology topology(forest, Partition::uniform(forest.size(), 1), 0);
      insert_prescribed(comm, store, forest, topology, starts);
      std::vector<DiscardRecord> discarded;
      for (int n = 0; n < steps; ++n)
        advance_particles(comm, store, forest, topology, used, s.scheme, n * dt, dt, 0, discarded);
      if (!discarded.empty()) throw Error("particles left the convergence domain");
      store.owned().for_each([&](const CellKey&, const Particle& p) {
        const Vec2 exact = *field.trajectory(starts[p.id], 0.0, steps * dt);
        err = std::max(err, norm(p.location - exact));
      });
    });
    result.rows.push_back({dt, steps, err});
  }
  std::vector<double> dts, errs;
  for (const auto& r : result.rows) {
    dts.push_back(r.dt);
    errs.push_back(r.error);
  }
  result.order = fit_order(dts, errs);
  return result;
}

void write_convergence_csv(std::ostream& out, const ConvergenceResult& result) {
  out << "dt,steps,error\n";
  for (const auto& r : result.rows) out << r.dt << ',' << r.steps << ',' << r.error << '\n';
  out << "# order,";
  if (result.order)
    out << *result.order;
  else
    out << "exact";
  out << '\n';
}

}  // namespace pic
