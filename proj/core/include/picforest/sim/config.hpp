#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "picforest/advection/integrators.hpp"
#include "picforest/generation/generation.hpp"
#include "picforest/properties/properties.hpp"

namespace pic {

/// Flat `section.key = value` file. Blank lines and `#` comments are
/// ignored; every other line must be an assignment with a dotted key.
/// Duplicate keys are an error. Lookups are recorded so that keys nobody
/// read can be reported.
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& source = "config");
  static ConfigFile load(const std::string& path);

  /// Adds or replaces a value, e.g. from a command-line override.
  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const { return values_.contains(key); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list; an empty value gives an empty list.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  /// Keys never looked up, excluding the free-form `physics.` section.
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  const std::string* find(const std::string& key) const;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

/// Parses "1,2,4" style lists of positive integers.
std::vector<int> parse_int_list(std::string_view text, std::string_view what);
std::vector<double> parse_double_list(std::string_view text, std::string_view what);

struct MeshConfig {
  /// rectangle | annulus
  std::string geometry = "rectangle";
  Vec2 lower{0.0, 0.0};
  Vec2 upper{1.0, 1.0};
  double r_inner = 0.5;
  double r_outer = 1.0;
  int nx = 16;
  int ny = 16;
  unsigned uniform_levels = 0;
  /// none | interface
  std::string refine = "none";
  unsigned refine_levels = 0;
  /// Leaves whose box comes within this distance of the interface refine.
  double refine_width = 0.02;
  /// Interface y = y0 + amplitude cos(pi x / Lx).
  double interface_y0 = 0.2;
  double interface_amplitude = 0.02;

  friend bool operator==(const MeshConfig&, const MeshConfig&) = default;
};

struct FieldConfig {
  /// rigid_rotation | shear | constant | unsteady_gyre | differential_rotation
  std::string name = "rigid_rotation";
  double omega = 1.0;
  double gamma = 1.0;
  double amplitude = 1.0;
  double omega_t = 0.0;
  double k = 1.0;
  Vec2 center{0.0, 0.0};
  Vec2 velocity{1.0, 0.0};
  /// Sample the field at mesh vertices and interpolate in time between
  /// step snapshots instead of evaluating it in closed form.
  bool discrete = false;

  friend bool operator==(const FieldConfig&, const FieldConfig&) = default;
};

struct ParticleConfig {
  /// random | reference | points
  std::string generator = "random";
  InCellSampler sampler = InCellSampler::rejection;
  /// uniform | band (annulus r in [band_inner, band_outer]) | layer (y <= layer_top)
  std::string density = "uniform";
  double band_inner = 0.55;
  double band_outer = 0.95;
  double layer_top = 0.4;
  std::uint64_t count = 1000;
  /// reference generator: per_cell x per_cell grid of reference points.
  int per_cell = 2;
  std::string points_file;

  friend bool operator==(const ParticleConfig&, const ParticleConfig&) = default;
};

struct PropertyConfig {
  /// Any of initial_position, composition, damage, deformation, velocity.
  std::vector<std::string> list{"initial_position"};
  double damage_alpha = 1.0;
  double damage_beta = 0.0;
  double damage_initial = 0.0;
  /// exponential | forward_euler
  std::string deformation_update = "exponential";
  /// Composition is 1 for initial y <= composition_top.
  double composition_top = 0.4;

  friend bool operator==(const PropertyConfig&, const PropertyConfig&) = default;
};

struct InterpolationConfig {
  /// 0 disables interpolation.
  int every = 0;
  InterpolationScheme scheme = InterpolationScheme::arithmetic_mean;
  TargetMode mode = TargetMode::cell_center;
  std::string property = "composition";
  /// Writes interpolated_<step>.csv on interpolation steps.
  bool write = false;

  friend bool operator==(const InterpolationConfig&, const InterpolationConfig&) = default;
};

struct BalanceConfig {
  double w = 0.0;
  /// Repartition cadence in steps; 0 keeps the initial uniform partition.
  int every = 10;

  friend bool operator==(const BalanceConfig&, const BalanceConfig&) = default;
};

struct OutputConfig {
  /// 0 writes only the initial and final state.
  int every = 10;
  int groups = 1;
  /// csv | binary | both | none
  std::string format = "csv";
  bool partition = true;

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct RunConfig {
  /// circular_flow | adaptive_interface | custom
  std::string scenario = "custom";
  int steps = 100;
  int ranks = 1;
  std::uint64_t seed = 1;
  Scheme integrator = Scheme::rk2;
  double cfl = 0.5;
  /// Fixed step; 0 derives it from the CFL number at t = 0.
  double dt = 0.0;
  MeshConfig mesh;
  FieldConfig field;
  ParticleConfig particles;
  PropertyConfig properties;
  InterpolationConfig interpolation;
  BalanceConfig balance;
  OutputConfig output;
  /// Free-form documentation values (physics.*); they drive nothing.
  std::map<std::string, std::string> physics;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Preset for a scenario name; throws ConfigError for unknown names.
RunConfig scenario_defaults(const std::string& scenario);

/// Scenario preset overlaid with the file's keys. Every enumeration and
/// range is validated; errors name the offending key. Unknown keys are
/// rejected.
RunConfig load_run_config(const ConfigFile& file);

/// Writes the full resolved configuration in the file grammar; parsing the
/// output reproduces the same RunConfig.
void write_config(std::ostream& out, const RunConfig& config);

}  // namespace pic
