#include "picforest/sim/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace pic {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(trim(text.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || end != t.data() + t.size() || t.empty())
    throw ConfigError(std::string(what) + ": expected a number, got '" + t + "'");
  return v;
}

std::int64_t to_int(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || end != t.data() + t.size() || t.empty())
    throw ConfigError(std::string(what) + ": expected an integer, got '" + t + "'");
  return v;
}

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(key + ": " + message);
}

void require_one_of(const std::string& value, std::initializer_list<std::string_view> allowed,
                    const std::string& key) {
  if (std::find(allowed.begin(), allowed.end(), value) != allowed.end()) return;
  std::string list;
  for (std::string_view a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  throw ConfigError(key + ": unknown value '" + value + "' (expected one of " + list + ")");
}

// Rethrows a parse failure of an enumeration with the key in front.
template <class F>
auto with_key(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string_view sampler_name(InCellSampler s) {
  return s == InCellSampler::rejection ? "rejection" : "metropolis_hastings";
}

InCellSampler parse_sampler(const std::string& name) {
  if (name == "rejection") return InCellSampler::rejection;
  if (name == "metropolis_hastings") return InCellSampler::metropolis_hastings;
  throw ConfigError("unknown sampler '" + name + "' (expected rejection or metropolis_hastings)");
}

std::string_view target_name(TargetMode m) {
  return m == TargetMode::cell_center ? "cell_center" : "quadrature";
}

TargetMode parse_target(const std::string& name) {
  if (name == "cell_center") return TargetMode::cell_center;
  if (name == "quadrature") return TargetMode::quadrature;
  throw ConfigError("unknown target mode '" + name + "' (expected cell_center or quadrature)");
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
  ConfigFile f;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(number);
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'section.key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size() ||
        key.find_first_of(" \t") != std::string::npos)
      throw ConfigError(where + ": key '" + key + "' is not of the form section.key");
    if (!f.values_.emplace(key, value).second)
      throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return f;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

void ConfigFile::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

const std::string* ConfigFile::find(const std::string& key) const {
  used_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  return v ? to_double(*v, key) : fallback;
}

std::int64_t ConfigFile::get_int(const std::string& key, std::int64_t fallback) const {
  const std::string* v = find(key);
  return v ? to_int(*v, key) : fallback;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + *v + "'");
}

std::vector<std::string> ConfigFile::get_list(const std::string& key,
                                              const std::vector<std::string>& fallback) const {
  const std::string* v = find(key);
  return v ? split(*v) : fallback;
}

std::vector<double> ConfigFile::get_doubles(const std::string& key,
                                            const std::vector<double>& fallback) const {
  const std::string* v = find(key);
  return v ? parse_double_list(*v, key) : fallback;
}

std::vector<std::string> ConfigFile::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.contains(k) && k.rfind("physics.", 0) != 0) out.push_back(k);
  return out;
}

std::vector<int> parse_int_list(std::string_view text, std::string_view what) {
  std::vector<int> out;
  for (const std::string& item : split(text)) {
    const auto v = to_int(item, what);
    if (v < 1 || v > 1 << 20) throw ConfigError(std::string(what) + ": '" + item + "' is not a positive count");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

std::vector<double> parse_double_list(std::string_view text, std::string_view what) {
  std::vector<double> out;
  for (const std::string& item : split(text)) out.push_back(to_double(item, what));
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

RunConfig scenario_defaults(const std::string& scenario) {
  RunConfig c;
  c.scenario = scenario;
  if (scenario == "custom") return c;
  if (scenario == "circular_flow") {
    c.mesh.geometry = "annulus";
    c.mesh.nx = 128;
    c.mesh.ny = 16;
    c.field.name = "rigid_rotation";
    c.particles.sampler = InCellSampler::metropolis_hastings;
    c.particles.density = "band";
    c.particles.count = 10000;
    c.balance.every = 0;
    return c;
  }
  if (scenario == "adaptive_interface") {
    c.mesh.upper = {0.9142, 1.0};
    c.mesh.refine = "interface";
    c.mesh.refine_levels = 3;
    c.field.name = "unsteady_gyre";
    // At W = 0.01 the particle term of the cost then outweighs the ~1400 cells.
    c.particles.count = 200000;
    c.properties.list = {"initial_position", "composition"};
    c.interpolation.every = 10;
    c.balance.w = 0.01;
    c.steps = 50;
    return c;
  }
  throw ConfigError("run.scenario: unknown scenario '" + scenario +
                    "' (expected circular_flow, adaptive_interface or custom)");
}

RunConfig load_run_config(const ConfigFile& f) {
  RunConfig c = scenario_defaults(f.get_string("run.scenario", "custom"));
  c.steps = static_cast<int>(f.get_int("run.steps", c.steps));
  require(c.steps >= 0, "run.steps", "must be non-negative");
  c.ranks = static_cast<int>(f.get_int("run.ranks", c.ranks));
  require(c.ranks >= 1 && c.ranks <= 1024, "run.ranks", "must be between 1 and 1024");
  const auto seed = f.get_int("run.seed", static_cast<std::int64_t>(c.seed));
  require(seed >= 0, "run.seed", "must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  const std::string integrator = f.get_string("run.integrator", std::string(scheme_name(c.integrator)));
  c.integrator = with_key("run.integrator", [&] { return parse_scheme(integrator); });
  c.cfl = f.get_double("run.cfl", c.cfl);
  require(c.cfl > 0.0, "run.cfl", "must be positive");
  c.dt = f.get_double("run.dt", c.dt);
  require(c.dt >= 0.0, "run.dt", "must be non-negative");

  MeshConfig& m = c.mesh;
  m.geometry = f.get_string("mesh.geometry", m.geometry);
  require_one_of(m.geometry, {"rectangle", "annulus"}, "mesh.geometry");
  m.lower = {f.get_double("mesh.x0", m.lower.x), f.get_double("mesh.y0", m.lower.y)};
  m.upper = {f.get_double("mesh.x1", m.upper.x), f.get_double("mesh.y1", m.upper.y)};
  require(m.lower.x < m.upper.x && m.lower.y < m.upper.y, "mesh.x1", "rectangle must have positive extent");
  m.r_inner = f.get_double("mesh.r_inner", m.r_inner);
  m.r_outer = f.get_double("mesh.r_outer", m.r_outer);
  require(m.r_inner > 0.0 && m.r_inner < m.r_outer, "mesh.r_inner", "need 0 < r_inner < r_outer");
  m.nx = static_cast<int>(f.get_int("mesh.nx", m.nx));
  m.ny = static_cast<int>(f.get_int("mesh.ny", m.ny));
  require(m.nx >= 1 && m.ny >= 1, "mesh.nx", "nx and ny must be at least 1");
  const auto levels = f.get_int("mesh.levels", m.uniform_levels);
  require(levels >= 0 && levels <= 12, "mesh.levels", "must be between 0 and 12");
  m.uniform_levels = static_cast<unsigned>(levels);
  m.refine = f.get_string("mesh.refine", m.refine);
  require_one_of(m.refine, {"none", "interface"}, "mesh.refine");
  const auto rl = f.get_int("mesh.refine_levels", m.refine_levels);
  require(rl >= 0 && rl <= 12, "mesh.refine_levels", "must be between 0 and 12");
  m.refine_levels = static_cast<unsigned>(rl);
  m.refine_width = f.get_double("mesh.refine_width", m.refine_width);
  require(m.refine_width >= 0.0, "mesh.refine_width", "must be non-negative");
  m.interface_y0 = f.get_double("mesh.interface_y0", m.interface_y0);
  m.interface_amplitude = f.get_double("mesh.interface_amplitude", m.interface_amplitude);

  FieldConfig& u = c.field;
  u.name = f.get_string("field.name", u.name);
  require_one_of(u.name, {"rigid_rotation", "shear", "constant", "unsteady_gyre", "differential_rotation"},
                 "field.name");
  u.omega = f.get_double("field.omega", u.omega);
  u.gamma = f.get_double("field.gamma", u.gamma);
  u.amplitude = f.get_double("field.amplitude", u.amplitude);
  u.omega_t = f.get_double("field.omega_t", u.omega_t);
  u.k = f.get_double("field.k", u.k);
  u.center = {f.get_double("field.cx", u.center.x), f.get_double("field.cy", u.center.y)};
  u.velocity = {f.get_double("field.ux", u.velocity.x), f.get_double("field.uy", u.velocity.y)};
  u.discrete = f.get_bool("field.discrete", u.discrete);

  ParticleConfig& p = c.particles;
  p.generator = f.get_string("particles.generator", p.generator);
  require_one_of(p.generator, {"random", "reference", "points"}, "particles.generator");
  const std::string sampler = f.get_string("particles.sampler", std::string(sampler_name(p.sampler)));
  p.sampler = with_key("particles.sampler", [&] { return parse_sampler(sampler); });
  p.density = f.get_string("particles.density", p.density);
  require_one_of(p.density, {"uniform", "band", "layer"}, "particles.density");
  p.band_inner = f.get_double("particles.band_inner", p.band_inner);
  p.band_outer = f.get_double("particles.band_outer", p.band_outer);
  require(p.band_inner < p.band_outer, "particles.band_inner", "must be below band_outer");
  p.layer_top = f.get_double("particles.layer_top", p.layer_top);
  const auto count = f.get_int("particles.count", static_cast<std::int64_t>(p.count));
  require(count >= 0, "particles.count", "must be non-negative");
  p.count = static_cast<std::uint64_t>(count);
  p.per_cell = static_cast<int>(f.get_int("particles.per_cell", p.per_cell));
  require(p.per_cell >= 1 && p.per_cell <= 64, "particles.per_cell", "must be between 1 and 64");
  p.points_file = f.get_string("particles.points_file", p.points_file);
  require(p.generator != "points" || !p.points_file.empty(), "particles.points_file",
          "required by the points generator");

  PropertyConfig& q = c.properties;
  q.list = f.get_list("properties.list", q.list);
  for (const std::string& name : q.list)
    require_one_of(name, {"initial_position", "composition", "damage", "deformation", "velocity"},
                   "properties.list");
  for (std::size_t i = 0; i < q.list.size(); ++i)
    require(std::find(q.list.begin() + static_cast<std::ptrdiff_t>(i) + 1, q.list.end(), q.list[i]) ==
                q.list.end(),
            "properties.list", "'" + q.list[i] + "' listed twice");
  q.damage_alpha = f.get_double("properties.damage_alpha", q.damage_alpha);
  q.damage_beta = f.get_double("properties.damage_beta", q.damage_beta);
  q.damage_initial = f.get_double("properties.damage_initial", q.damage_initial);
  require(q.damage_alpha >= 0.0 && q.damage_beta >= 0.0 && q.damage_initial >= 0.0,
          "properties.damage_alpha", "damage parameters must be non-negative");
  q.deformation_update = f.get_string("properties.deformation_update", q.deformation_update);
  require_one_of(q.deformation_update, {"exponential", "forward_euler"}, "properties.deformation_update");
  q.composition_top = f.get_double("properties.composition_top", q.composition_top);

  InterpolationConfig& in = c.interpolation;
  in.every = static_cast<int>(f.get_int("interpolation.every", in.every));
  require(in.every >= 0, "interpolation.every", "must be non-negative");
  const std::string scheme =
      f.get_string("interpolation.scheme", std::string(interpolation_name(in.scheme)));
  in.scheme = with_key("interpolation.scheme", [&] { return parse_interpolation(scheme); });
  const std::string mode = f.get_string("interpolation.mode", std::string(target_name(in.mode)));
  in.mode = with_key("interpolation.mode", [&] { return parse_target(mode); });
  in.property = f.get_string("interpolation.property", in.property);
  in.write = f.get_bool("interpolation.write", in.write);
  if (in.every > 0)
    require(std::find(q.list.begin(), q.list.end(), in.property) != q.list.end(),
            "interpolation.property", "'" + in.property + "' is not in properties.list");

  c.balance.w = f.get_double("balance.w", c.balance.w);
  require(c.balance.w >= 0.0, "balance.w", "must be non-negative");
  c.balance.every = static_cast<int>(f.get_int("balance.every", c.balance.every));
  require(c.balance.every >= 0, "balance.every", "must be non-negative");

  OutputConfig& o = c.output;
  o.every = static_cast<int>(f.get_int("output.every", o.every));
  require(o.every >= 0, "output.every", "must be non-negative");
  o.groups = static_cast<int>(f.get_int("output.groups", o.groups));
  require(o.groups >= 1, "output.groups", "must be at least 1");
  o.format = f.get_string("output.format", o.format);
  require_one_of(o.format, {"csv", "binary", "both", "none"}, "output.format");
  o.partition = f.get_bool("output.partition", o.partition);

  for (const auto& [key, value] : f.entries())
    if (key.rfind("physics.", 0) == 0) c.physics[key.substr(8)] = value;

  const auto unused = f.unused_keys();
  if (!unused.empty()) throw ConfigError(unused.front() + ": unknown key");
  return c;
}

void write_config(std::ostream& out, const RunConfig& c) {
  const auto old = out.precision(17);
  const auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (const std::string& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
  };
  const auto flag = [](bool b) { return b ? "true" : "false"; };
  out << "run.scenario = " << c.scenario << '\n'
      << "run.steps = " << c.steps << '\n'
      << "run.ranks = " << c.ranks << '\n'
      << "run.seed = " << c.seed << '\n'
      << "run.integrator = " << scheme_name(c.integrator) << '\n'
      << "run.cfl = " << c.cfl << '\n'
      << "run.dt = " << c.dt << '\n'
      << "mesh.geometry = " << c.mesh.geometry << '\n'
      << "mesh.x0 = " << c.mesh.lower.x << '\n'
      << "mesh.y0 = " << c.mesh.lower.y << '\n'
      << "mesh.x1 = " << c.mesh.upper.x << '\n'
      << "mesh.y1 = " << c.mesh.upper.y << '\n'
      << "mesh.r_inner = " << c.mesh.r_inner << '\n'
      << "mesh.r_outer = " << c.mesh.r_outer << '\n'
      << "mesh.nx = " << c.mesh.nx << '\n'
      << "mesh.ny = " << c.mesh.ny << '\n'
      << "mesh.levels = " << c.mesh.uniform_levels << '\n'
      << "mesh.refine = " << c.mesh.refine << '\n'
      << "mesh.refine_levels = " << c.mesh.refine_levels << '\n'
      << "mesh.refine_width = " << c.mesh.refine_width << '\n'
      << "mesh.interface_y0 = " << c.mesh.interface_y0 << '\n'
      << "mesh.interface_amplitude = " << c.mesh.interface_amplitude << '\n'
      << "field.name = " << c.field.name << '\n'
      << "field.omega = " << c.field.omega << '\n'
      << "field.gamma = " << c.field.gamma << '\n'
      << "field.amplitude = " << c.field.amplitude << '\n'
      << "field.omega_t = " << c.field.omega_t << '\n'
      << "field.k = " << c.field.k << '\n'
      << "field.cx = " << c.field.center.x << '\n'
      << "field.cy = " << c.field.center.y << '\n'
      << "field.ux = " << c.field.velocity.x << '\n'
      << "field.uy = " << c.field.velocity.y << '\n'
      << "field.discrete = " << flag(c.field.discrete) << '\n'
      << "particles.generator = " << c.particles.generator << '\n'
      << "particles.sampler = " << sampler_name(c.particles.sampler) << '\n'
      << "particles.density = " << c.particles.density << '\n'
      << "particles.band_inner = " << c.particles.band_inner << '\n'
      << "particles.band_outer = " << c.particles.band_outer << '\n'
      << "particles.layer_top = " << c.particles.layer_top << '\n'
      << "particles.count = " << c.particles.count << '\n'
      << "particles.per_cell = " << c.particles.per_cell << '\n';
  if (!c.particles.points_file.empty()) out << "particles.points_file = " << c.particles.points_file << '\n';
  out << "properties.list = " << list(c.properties.list) << '\n'
      << "properties.damage_alpha = " << c.properties.damage_alpha << '\n'
      << "properties.damage_beta = " << c.properties.damage_beta << '\n'
      << "properties.damage_initial = " << c.properties.damage_initial << '\n'
      << "properties.deformation_update = " << c.properties.deformation_update << '\n'
      << "properties.composition_top = " << c.properties.composition_top << '\n'
      << "interpolation.every = " << c.interpolation.every << '\n'
      << "interpolation.scheme = " << interpolation_name(c.interpolation.scheme) << '\n'
      << "interpolation.mode = " << target_name(c.interpolation.mode) << '\n'
      << "interpolation.property = " << c.interpolation.property << '\n'
      << "interpolation.write = " << flag(c.interpolation.write) << '\n'
      << "balance.w = " << c.balance.w << '\n'
      << "balance.every = " << c.balance.every << '\n'
      << "output.every = " << c.output.every << '\n'
      << "output.groups = " << c.output.groups << '\n'
      << "output.format = " << c.output.format << '\n'
      << "output.partition = " << flag(c.output.partition) << '\n';
  for (const auto& [k, v] : c.physics) out << "physics." << k << " = " << v << '\n';
  out.precision(old);
}

}  // namespace pic
