#include "picforest/advection/integrators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pic {

Scheme parse_scheme(std::string_view name) {
  if (name == "euler") return Scheme::euler;
  if (name == "rk2") return Scheme::rk2;
  if (name == "rk4") return Scheme::rk4;
  throw ConfigError("integrator: unknown scheme '" + std::string(name) + "' (euler, rk2, rk4)");
}

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::euler: return "euler";
    case Scheme::rk2: return "rk2";
    case Scheme::rk4: return "rk4";
  }
  return "?";
}

std::size_t scratch_size(Scheme s) {
  switch (s) {
    case Scheme::euler: return 0;
    case Scheme::rk2: return 2;
    case Scheme::rk4: return 4;
  }
  return 0;
}

int substep_count(Scheme s) {
  switch (s) {
    case Scheme::euler: return 1;
    case Scheme::rk2: return 2;
    case Scheme::rk4: return 4;
  }
  return 1;
}

double stage_time_fraction(Scheme s, int stage) {
  switch (s) {
    case Scheme::euler: return 0.0;
    case Scheme::rk2: return stage == 0 ? 0.0 : 0.5;
    case Scheme::rk4: return stage == 0 ? 0.0 : stage == 3 ? 1.0 : 0.5;
  }
  return 0.0;
}

double compute_cfl_dt(const VelocityField& field, const Forest& forest, double cfl, double t,
                      std::uint32_t begin, std::uint32_t end) {
  if (!(cfl > 0.0)) throw ConfigError("cfl must be positive");
  end = std::min<std::uint32_t>(end, static_cast<std::uint32_t>(forest.size()));
  double best = std::numeric_limits<double>::infinity();
  constexpr Vec2 corners[4] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (std::uint32_t i = begin; i < end; ++i) {
    const Cell& c = forest.leaf(i);
    double speed = 0.0;
    for (const Vec2& r : corners) speed = std::max(speed, norm(field.value(c, r, t)));
    if (speed > 0.0) best = std::min(best, c.diameter / speed);
  }
  return cfl * best;
}

double compute_cfl_dt(Comm& comm, const VelocityField& field, const Forest& forest,
                      const RankTopology& topology, double cfl, double t) {
  const double local = compute_cfl_dt(field, forest, cfl, t, topology.begin(), topology.end());
  const double dt = comm.allreduce_min(local);
  if (!std::isfinite(dt)) throw FieldError("velocity vanishes at every vertex; no CFL time step");
  return dt;
}

void advect_substep(ParticleStore& store, const Forest& forest, const VelocityField& field,
                    Scheme scheme, int stage, double t, double dt, std::size_t scratch_offset) {
  const double te = t + stage_time_fraction(scheme, stage) * dt;
  store.owned().for_each_cell([&](const CellKey& key, std::span<Particle> list) {
    const auto leaf = forest.find(key);
    if (!leaf) throw Error("particle stored under a cell that is not a leaf");
    const Cell& cell = forest.leaf(*leaf);
    for (Particle& p : list) {
      const Vec2 k = field.value(cell, p.reference_location, te);
      if (scheme == Scheme::euler) {
        p.location += dt * k;
        continue;
      }
      const std::span<double> s = store.properties(p).subspan(scratch_offset, scratch_size(scheme));
      if (stage == 0) {
        s[0] = p.location.x;
        s[1] = p.location.y;
      }
      const Vec2 xn{s[0], s[1]};
      if (scheme == Scheme::rk2) {
        p.location = stage == 0 ? xn + (0.5 * dt) * k : xn + dt * k;
        continue;
      }
      // Classic RK4; s[2..3] accumulate k1 + 2 k2 + 2 k3.
      switch (stage) {
        case 0:
          s[2] = k.x;
          s[3] = k.y;
          p.location = xn + (0.5 * dt) * k;
          break;
        case 1:
          s[2] += 2.0 * k.x;
          s[3] += 2.0 * k.y;
          p.location = xn + (0.5 * dt) * k;
          break;
        case 2:
          s[2] += 2.0 * k.x;
          s[3] += 2.0 * k.y;
          p.location = xn + dt * k;
          break;
        default:
          p.location = xn + (dt / 6.0) * (Vec2{s[2], s[3]} + k);
          break;
      }
    }
  });
}

SortStats advance_particles(Comm& comm, ParticleStore& store, const Forest& forest,
                            const RankTopology& topology, const VelocityField& field, Scheme scheme,
                            double t, double dt, std::size_t scratch_offset,
                            std::vector<DiscardRecord>& discarded,
                            const std::function<void(int)>& after_stage) {
  SortStats total;
  for (int stage = 0; stage < substep_count(scheme); ++stage) {
    advect_substep(store, forest, field, scheme, stage, t, dt, scratch_offset);
    total += transport_particles(comm, store, forest, topology, discarded);
    if (after_stage) after_stage(stage);
  }
  return total;
}

std::optional<double> fit_order(std::span<const double> dts, std::span<const double> errors,
                                double floor) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < dts.size(); ++i)
    if (errors[i] > floor) pts.emplace_back(std::log(dts[i]), std::log(errors[i]));
  if (pts.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : pts) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  return sxy / sxx;
}

}  // namespace pic
