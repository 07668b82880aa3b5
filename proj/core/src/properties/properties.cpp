#include "picforest/properties/properties.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

namespace pic {

Tensor2 matrix_exponential(const Tensor2& a) {
  // A = (tr/2) I + B with B traceless, so B^2 = delta I, delta = -det B.
  const double half = 0.5 * a.trace();
  const Tensor2 b{a.xx - half, a.xy, a.yx, a.yy - half};
  const double delta = -b.det();
  double c;  // cosh/cos part
  double s;  // sinh(x)/x or sin(x)/x
  if (delta > 0.0) {
    const double x = std::sqrt(delta);
    c = std::cosh(x);
    s = x < 1e-8 ? 1.0 + delta / 6.0 : std::sinh(x) / x;
  } else if (delta < 0.0) {
    const double x = std::sqrt(-delta);
    c = std::cos(x);
    s = x < 1e-8 ? 1.0 + delta / 6.0 : std::sin(x) / x;
  } else {
    c = 1.0;
    s = 1.0;
  }
  const double e = std::exp(half);
  return {e * (c + s * b.xx), e * s * b.xy, e * s * b.yx, e * (c + s * b.yy)};
}

void InitialPositionProperty::initialize(Vec2 location, std::span<double> values) const {
  values[0] = location.x;
  values[1] = location.y;
}

CompositionProperty::CompositionProperty()
    : f_([](Vec2 x) { return x.y <= 0.4 ? 1.0 : 0.0; }) {}

void CompositionProperty::initialize(Vec2 location, std::span<double> values) const {
  values[0] = f_(location);
}

void DamageProperty::update(const Cell& cell, const Particle& p, const VelocityField& field,
                            double t_new, double dt, std::span<double> values) const {
  const double rate = symmetric_part(field.gradient(cell, p.reference_location, t_new)).frobenius();
  values[0] = std::max(0.0, values[0] + dt * (alpha_ * rate - beta_ * values[0]));
}

void DeformationProperty::initialize(Vec2, std::span<double> values) const {
  values[0] = 1.0;
  values[1] = 0.0;
  values[2] = 0.0;
  values[3] = 1.0;
}

void DeformationProperty::update(const Cell& cell, const Particle& p, const VelocityField& field,
                                 double t_new, double dt, std::span<double> values) const {
  const Tensor2 g = field.gradient(cell, p.reference_location, t_new);
  const Tensor2 f{values[0], values[1], values[2], values[3]};
  const Tensor2 next = update_ == Update::exponential ? matrix_exponential(dt * g) * f
                                                      : f + dt * (g * f);
  values[0] = next.xx;
  values[1] = next.xy;
  values[2] = next.yx;
  values[3] = next.yy;
}

void VelocitySampleProperty::initialize(Vec2, std::span<double> values) const {
  values[0] = 0.0;
  values[1] = 0.0;
}

void VelocitySampleProperty::sample(const Cell& cell, const Particle& p,
                                    const VelocityField& field, double t,
                                    std::span<double> values) const {
  const Vec2 u = field.value(cell, p.reference_location, t);
  values[0] = u.x;
  values[1] = u.y;
}

void PropertyManager::add(std::shared_ptr<const PropertyPlugin> plugin, InitMode mode) {
  if (has(plugin->name())) throw ConfigError("property '" + plugin->name() + "' registered twice");
  entries_.push_back({plugin, mode, plugin_reals_});
  plugin_reals_ += plugin->components();
}

bool PropertyManager::has(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.plugin->name() == name; });
}

const PropertyManager::Entry& PropertyManager::entry(std::string_view name) const {
  for (const Entry& e : entries_)
    if (e.plugin->name() == name) return e;
  throw ConfigError("unknown property '" + std::string(name) + "'");
}

std::size_t PropertyManager::offset(std::string_view name) const { return entry(name).offset; }

std::size_t PropertyManager::components(std::string_view name) const {
  return entry(name).plugin->components();
}

std::vector<std::string> PropertyManager::column_names() const {
  std::vector<std::string> out;
  for (const Entry& e : entries_) {
    const std::size_t n = e.plugin->components();
    for (std::size_t k = 0; k < n; ++k)
      out.push_back(n == 1 ? e.plugin->name() : e.plugin->name() + "[" + std::to_string(k) + "]");
  }
  for (std::size_t k = 0; k < scratch_; ++k) out.push_back("scratch[" + std::to_string(k) + "]");
  return out;
}

void PropertyManager::initialize(const ParticleStore& store, const CellKey& key,
                                 const Particle& p, std::span<double> values) const {
  for (const Entry& e : entries_) {
    const std::size_t n = e.plugin->components();
    const std::span<double> mine = values.subspan(e.offset, n);
    const auto existing = store.owned().particles_in_cell(key);
    if (e.mode == InitMode::interpolate_from_neighbors && !existing.empty()) {
      std::fill(mine.begin(), mine.end(), 0.0);
      for (const Particle& q : existing) {
        const auto v = store.properties(q).subspan(e.offset, n);
        for (std::size_t k = 0; k < n; ++k) mine[k] += v[k];
      }
      for (double& m : mine) m /= static_cast<double>(existing.size());
    } else {
      e.plugin->initialize(p.location, mine);
    }
  }
  std::fill(values.begin() + static_cast<std::ptrdiff_t>(plugin_reals_), values.end(), 0.0);
}

ParticleInit PropertyManager::initializer(const ParticleStore& store) const {
  return [this, &store](const CellKey& key, Particle& p, std::span<double> values) {
    initialize(store, key, p, values);
  };
}

void PropertyManager::update(ParticleStore& store, const Forest& forest,
                             const VelocityField& field, double t_new, double dt) const {
  const bool any = std::any_of(entries_.begin(), entries_.end(),
                               [](const Entry& e) { return e.plugin->evolves(); });
  if (!any) return;
  for (const auto& [key, list] : store.owned().cells()) {
    const Cell& cell = forest.leaf(*forest.find(key));
    for (const Particle& p : list) {
      const auto values = store.properties(p);
      for (const Entry& e : entries_)
        if (e.plugin->evolves())
          e.plugin->update(cell, p, field, t_new, dt, values.subspan(e.offset, e.plugin->components()));
    }
  }
}

void PropertyManager::sample(ParticleStore& store, const Forest& forest,
                             const VelocityField& field, double t) const {
  const bool any = std::any_of(entries_.begin(), entries_.end(),
                               [](const Entry& e) { return e.plugin->sampled(); });
  if (!any) return;
  for (const auto& [key, list] : store.owned().cells()) {
    const Cell& cell = forest.leaf(*forest.find(key));
    for (const Particle& p : list) {
      const auto values = store.properties(p);
      for (const Entry& e : entries_)
        if (e.plugin->sampled())
          e.plugin->sample(cell, p, field, t, values.subspan(e.offset, e.plugin->components()));
    }
  }
}

// Interpolation.

namespace {

constexpr std::array<std::pair<InterpolationScheme, std::string_view>, 7> kSchemeNames{{
    {InterpolationScheme::nearest_neighbor, "nearest_neighbor"},
    {InterpolationScheme::arithmetic_mean, "arithmetic_mean"},
    {InterpolationScheme::geometric_mean, "geometric_mean"},
    {InterpolationScheme::harmonic_mean, "harmonic_mean"},
    {InterpolationScheme::distance_weighted, "distance_weighted"},
    {InterpolationScheme::shape_function_weighted, "shape_function_weighted"},
    {InterpolationScheme::least_squares_linear, "least_squares_linear"},
}};

double arithmetic(const std::vector<Contribution>& c) {
  double s = 0.0;
  for (const Contribution& x : c) s += x.value;
  return s / static_cast<double>(c.size());
}

void require_positive(const std::vector<Contribution>& c, std::string_view scheme) {
  for (const Contribution& x : c)
    if (!(x.value > 0.0))
      throw InterpolationError(std::string(scheme) + " needs positive values; particle " +
                               std::to_string(x.id) + " has " + std::to_string(x.value));
}

// Solves the 3x3 system in place; false if it is numerically singular.
bool solve3(std::array<std::array<double, 4>, 3>& m) {
  double scale = 0.0;
  for (const auto& row : m)
    for (int j = 0; j < 3; ++j) scale = std::max(scale, std::abs(row[static_cast<std::size_t>(j)]));
  if (scale == 0.0) return false;
  for (std::size_t col = 0; col < 3; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-10 * scale) return false;
    std::swap(m[col], m[piv]);
    for (std::size_t r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (std::size_t k = col; k < 4; ++k) m[r][k] -= f * m[col][k];
    }
  }
  for (std::size_t r = 0; r < 3; ++r) m[r][3] /= m[r][r];
  return true;
}

double least_squares(const Cell& cell, Vec2 target, const std::vector<Contribution>& c) {
  // Coordinates centered on the cell and scaled by its diameter.
  const auto local = [&](Vec2 x) { return (x - cell.center) / cell.diameter; };
  std::array<std::array<double, 4>, 3> m{};
  for (const Contribution& x : c) {
    const Vec2 q = local(x.location);
    const std::array<double, 3> row{1.0, q.x, q.y};
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) m[i][j] += row[i] * row[j];
      m[i][3] += row[i] * x.value;
    }
  }
  if (c.size() < 3 || !solve3(m)) return arithmetic(c);
  const Vec2 t = local(target);
  return m[0][3] + m[1][3] * t.x + m[2][3] * t.y;
}

}  // namespace

InterpolationScheme parse_interpolation(std::string_view name) {
  for (const auto& [s, n] : kSchemeNames)
    if (n == name) return s;
  throw ConfigError("interpolation: unknown scheme '" + std::string(name) + "'");
}

std::string_view interpolation_name(InterpolationScheme s) {
  for (const auto& [k, n] : kSchemeNames)
    if (k == s) return n;
  return "?";
}

std::vector<Vec2> interpolation_targets(TargetMode mode) {
  if (mode == TargetMode::cell_center) return {{0.5, 0.5}};
  const double g = 0.5 / std::sqrt(3.0);
  return {{0.5 - g, 0.5 - g}, {0.5 + g, 0.5 - g}, {0.5 - g, 0.5 + g}, {0.5 + g, 0.5 + g}};
}

double interpolate_value(InterpolationScheme scheme, const Cell& cell, Vec2 target_ref,
                         std::vector<Contribution> c) {
  if (c.empty()) throw InterpolationError("no particles contribute to the cell");
  std::sort(c.begin(), c.end(), [](const Contribution& a, const Contribution& b) { return a.id < b.id; });
  double lo = c[0].value;
  double hi = c[0].value;
  for (const Contribution& x : c) {
    lo = std::min(lo, x.value);
    hi = std::max(hi, x.value);
  }
  const Vec2 target = map_to_real(cell.vertices, target_ref);
  double v = 0.0;
  switch (scheme) {
    case InterpolationScheme::nearest_neighbor: {
      double best = dot(c[0].location - target, c[0].location - target);
      v = c[0].value;
      for (const Contribution& x : c) {
        const double d = dot(x.location - target, x.location - target);
        if (d < best) {
          best = d;
          v = x.value;
        }
      }
      break;
    }
    case InterpolationScheme::arithmetic_mean:
      v = arithmetic(c);
      break;
    case InterpolationScheme::geometric_mean: {
      require_positive(c, "geometric_mean");
      double product = 1.0;
      for (const Contribution& x : c) product *= x.value;
      const double n = static_cast<double>(c.size());
      if (std::isfinite(product) && product > 0.0) {
        v = c.size() == 2 ? std::sqrt(product) : std::pow(product, 1.0 / n);
      } else {
        double logs = 0.0;
        for (const Contribution& x : c) logs += std::log(x.value);
        v = std::exp(logs / n);
      }
      break;
    }
    case InterpolationScheme::harmonic_mean: {
      require_positive(c, "harmonic_mean");
      double inv = 0.0;
      for (const Contribution& x : c) inv += 1.0 / x.value;
      v = static_cast<double>(c.size()) / inv;
      break;
    }
    case InterpolationScheme::distance_weighted: {
      const double eps = 1e-14 * cell.diameter;
      double coincident = 0.0;
      std::size_t n_coincident = 0;
      double num = 0.0;
      double den = 0.0;
      for (const Contribution& x : c) {
        const double d = norm(x.location - target);
        if (d <= eps) {
          coincident += x.value;
          ++n_coincident;
          continue;
        }
        num += x.value / d;
        den += 1.0 / d;
      }
      v = n_coincident > 0 ? coincident / static_cast<double>(n_coincident) : num / den;
      break;
    }
    case InterpolationScheme::shape_function_weighted: {
      const auto phi_t = shape_values(target_ref);
      double num = 0.0;
      double den = 0.0;
      for (const Contribution& x : c) {
        const Vec2 r{std::clamp(x.reference.x, 0.0, 1.0), std::clamp(x.reference.y, 0.0, 1.0)};
        const auto phi_p = shape_values(r);
        double w = 0.0;
        for (std::size_t k = 0; k < 4; ++k) w += phi_t[k] * phi_p[k];
        num += w * x.value;
        den += w;
      }
      v = den > 0.0 ? num / den : arithmetic(c);
      break;
    }
    case InterpolationScheme::least_squares_linear:
      v = least_squares(cell, target, c);
      break;
  }
  return std::clamp(v, lo, hi);
}

namespace {

// Particles of one leaf (owned or ghost container) as contributions to `cell`.
void add_particles(const ParticleStore& store, const ParticleContainer& from, const Cell& source,
                   const Cell& cell, bool same_cell, std::size_t offset, std::size_t component,
                   std::vector<Contribution>& out) {
  for (const Particle& p : from.particles_in_cell(source.key)) {
    Vec2 ref = p.reference_location;
    if (!same_cell) {
      const auto r = invert_mapping(cell.vertices, p.location);
      ref = r ? *r : Vec2{0.5, 0.5};
    }
    out.push_back({p.id, p.location, ref, store.properties(p)[offset + component]});
  }
}

const ParticleContainer& container_for(const ParticleStore& store, const RankTopology& topology,
                                       std::uint32_t leaf) {
  return topology.owns(leaf) ? store.owned() : store.ghosts();
}

// Contributions for one target of one owned leaf, or empty if there are none
// even after extending to the neighbor layer.
std::vector<Contribution> gather(const ParticleStore& store, const Forest& forest,
                                 const RankTopology& topology, std::uint32_t leaf, Vec2 target,
                                 InterpolationScheme scheme, std::size_t offset,
                                 std::size_t component) {
  const Cell& cell = forest.leaf(leaf);
  std::vector<Contribution> c;
  add_particles(store, store.owned(), cell, cell, true, offset, component, c);
  if (scheme == InterpolationScheme::distance_weighted) {
    for (std::uint32_t n : forest.vertex_neighbors(leaf))
      add_particles(store, container_for(store, topology, n), forest.leaf(n), cell, false, offset,
                    component, c);
    std::erase_if(c, [&](const Contribution& x) { return norm(x.location - target) > cell.diameter; });
  }
  if (!c.empty()) return c;
  for (std::uint32_t n : forest.vertex_neighbors(leaf))
    add_particles(store, container_for(store, topology, n), forest.leaf(n), cell, false, offset,
                  component, c);
  return c;
}

std::string cell_list(const std::vector<CellKey>& keys) {
  std::string s;
  for (std::size_t i = 0; i < keys.size() && i < 20; ++i)
    s += (i ? ", " : "") + std::string("(") + std::to_string(keys[i].level) + "," +
         std::to_string(keys[i].index) + ")";
  if (keys.size() > 20) s += ", ... (" + std::to_string(keys.size()) + " total)";
  return s;
}

}  // namespace

std::vector<CellValues> interpolate_to_mesh(const ParticleStore& store, const Forest& forest,
                                            const RankTopology& topology,
                                            const PropertyManager& properties,
                                            std::string_view name, InterpolationScheme scheme,
                                            TargetMode mode) {
  const std::size_t offset = properties.offset(name);
  const std::size_t ncomp = properties.components(name);
  const auto targets = interpolation_targets(mode);
  std::vector<CellValues> out;
  std::vector<CellKey> empty;
  for (std::uint32_t i = topology.begin(); i < topology.end(); ++i) {
    const Cell& cell = forest.leaf(i);
    CellValues cv{cell.key, cell.center, {}};
    bool ok = true;
    for (const Vec2& t : targets) {
      const Vec2 x = map_to_real(cell.vertices, t);
      for (std::size_t k = 0; k < ncomp && ok; ++k) {
        auto c = gather(store, forest, topology, i, x, scheme, offset, k);
        if (c.empty()) {
          ok = false;
          break;
        }
        cv.values.push_back(interpolate_value(scheme, cell, t, std::move(c)));
      }
    }
    if (!ok)
      empty.push_back(cell.key);
    else
      out.push_back(std::move(cv));
  }
  if (!empty.empty())
    throw InterpolationError("no particles in or around cells " + cell_list(empty));
  return out;
}

void write_interpolated_csv(std::ostream& out, std::span<const CellValues> cells) {
  out << "level,index,cx,cy,value...\n";
  out.precision(17);
  for (const CellValues& c : cells) {
    out << c.key.level << ',' << c.key.index << ',' << c.center.x << ',' << c.center.y;
    for (double v : c.values) out << ',' << v;
    out << '\n';
  }
}

double clipped_area_above(const Quad& q, double y_min) {
  const std::array<Vec2, 4> poly{q[0], q[1], q[3], q[2]};
  std::vector<Vec2> clipped;
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % 4];
    const bool ina = a.y >= y_min;
    const bool inb = b.y >= y_min;
    if (ina) clipped.push_back(a);
    if (ina != inb) {
      const double s = (y_min - a.y) / (b.y - a.y);
      clipped.push_back({a.x + s * (b.x - a.x), y_min});
    }
  }
  double area = 0.0;
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    const Vec2 a = clipped[i];
    const Vec2 b = clipped[(i + 1) % clipped.size()];
    area += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(area);
}

double entrainment(Comm& comm, const ParticleStore& store, const Forest& forest,
                   const RankTopology& topology, const PropertyManager& properties,
                   const EntrainmentOptions& options) {
  const std::size_t offset = properties.offset("composition");
  double local = 0.0;
  std::vector<CellKey> empty;
  for (std::uint32_t i = topology.begin(); i < topology.end(); ++i) {
    const Cell& cell = forest.leaf(i);
    const double area = clipped_area_above(cell.vertices, options.y_split);
    if (area <= 0.0) continue;
    auto c = gather(store, forest, topology, i, cell.center, InterpolationScheme::arithmetic_mean,
                    offset, 0);
    if (c.empty()) {
      empty.push_back(cell.key);
      continue;
    }
    local += area * interpolate_value(InterpolationScheme::arithmetic_mean, cell, {0.5, 0.5}, std::move(c));
  }
  if (!empty.empty())
    throw InterpolationError("no particles in or around cells " + cell_list(empty));
  return comm.allreduce_sum(local) / options.normalization;
}

}  // namespace pic
