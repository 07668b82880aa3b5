#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "picforest/field/velocity_field.hpp"
#include "picforest/generation/generation.hpp"
#include "picforest/mesh/forest.hpp"
#include "picforest/parallel/runtime.hpp"
#include "picforest/parallel/topology.hpp"
#include "picforest/particles/particle_store.hpp"

namespace pic {

/// exp(A) for a 2x2 matrix in closed form.
Tensor2 matrix_exponential(const Tensor2& a);

class PropertyPlugin {
 public:
  virtual ~PropertyPlugin() = default;
  virtual std::string name() const = 0;
  virtual std::size_t components() const = 0;
  /// Values for a particle created at `location`.
  virtual void initialize(Vec2 location, std::span<double> values) const = 0;
  /// True if update() changes values at the end of every step.
  virtual bool evolves() const { return false; }
  /// One step ending at t_new, with the particle already in its final cell.
  virtual void update(const Cell&, const Particle&, const VelocityField&, double /*t_new*/,
                      double /*dt*/, std::span<double> /*values*/) const {}
  /// True if sample() should run before output.
  virtual bool sampled() const { return false; }
  virtual void sample(const Cell&, const Particle&, const VelocityField&, double /*t*/,
                      std::span<double> /*values*/) const {}
};

/// Position at creation; never changes afterwards.
class InitialPositionProperty final : public PropertyPlugin {
 public:
  std::string name() const override { return "initial_position"; }
  std::size_t components() const override { return 2; }
  void initialize(Vec2 location, std::span<double> values) const override;
};

/// Scalar set by a function of the initial position. The default marks the
/// lower layer y <= 0.4 with 1.
class CompositionProperty final : public PropertyPlugin {
 public:
  CompositionProperty();
  explicit CompositionProperty(std::function<double(Vec2)> f) : f_(std::move(f)) {}
  std::string name() const override { return "composition"; }
  std::size_t components() const override { return 1; }
  void initialize(Vec2 location, std::span<double> values) const override;

 private:
  std::function<double(Vec2)> f_;
};

/// d' = alpha |eps| - beta d with eps the strain rate and |.| the Frobenius
/// norm; forward Euler on end-of-step data, clamped at zero.
class DamageProperty final : public PropertyPlugin {
 public:
  DamageProperty(double alpha, double beta, double initial = 0.0)
      : alpha_(alpha), beta_(beta), initial_(initial) {}
  std::string name() const override { return "damage"; }
  std::size_t components() const override { return 1; }
  void initialize(Vec2, std::span<double> values) const override { values[0] = initial_; }
  bool evolves() const override { return true; }
  void update(const Cell& cell, const Particle& p, const VelocityField& field, double t_new,
              double dt, std::span<double> values) const override;

 private:
  double alpha_;
  double beta_;
  double initial_;
};

/// Deformation gradient F' = grad u F with F(0) = I, stored row-major.
class DeformationProperty final : public PropertyPlugin {
 public:
  enum class Update {
    /// F <- exp(dt grad u) F; exact for piecewise-constant gradients and
    /// keeps det F = exp(dt tr grad u) per step.
    exponential,
    /// F <- F + dt grad u F.
    forward_euler,
  };
  explicit DeformationProperty(Update u = Update::exponential) : update_(u) {}
  std::string name() const override { return "deformation"; }
  std::size_t components() const override { return 4; }
  void initialize(Vec2, std::span<double> values) const override;
  bool evolves() const override { return true; }
  void update(const Cell& cell, const Particle& p, const VelocityField& field, double t_new,
              double dt, std::span<double> values) const override;

 private:
  Update update_;
};

/// Velocity at the particle, written only when output is produced.
class VelocitySampleProperty final : public PropertyPlugin {
 public:
  std::string name() const override { return "velocity"; }
  std::size_t components() const override { return 2; }
  void initialize(Vec2, std::span<double> values) const override;
  bool sampled() const override { return true; }
  void sample(const Cell& cell, const Particle& p, const VelocityField& field, double t,
              std::span<double> values) const override;
};

enum class InitMode {
  function_of_position,
  /// Arithmetic mean over the particles already in the cell; falls back to
  /// the function when the cell is empty.
  interpolate_from_neighbors,
};

/// Ordered plugin list laid out contiguously in each particle's property
/// slot, followed by the integrator scratch.
class PropertyManager {
 public:
  void add(std::shared_ptr<const PropertyPlugin> plugin,
           InitMode mode = InitMode::function_of_position);
  void reserve_integrator_scratch(std::size_t reals) { scratch_ = reals; }

  std::size_t n_properties() const { return plugin_reals_ + scratch_; }
  std::size_t scratch_offset() const { return plugin_reals_; }
  std::size_t scratch_size() const { return scratch_; }
  bool has(std::string_view name) const;
  /// Throws ConfigError for unknown names.
  std::size_t offset(std::string_view name) const;
  std::size_t components(std::string_view name) const;
  /// Column names in slot order, e.g. initial_position[0].
  std::vector<std::string> column_names() const;

  void initialize(const ParticleStore& store, const CellKey& key, const Particle& p,
                  std::span<double> values) const;
  /// Generation callback bound to a store.
  ParticleInit initializer(const ParticleStore& store) const;
  /// End-of-step update of every owned particle.
  void update(ParticleStore& store, const Forest& forest, const VelocityField& field,
              double t_new, double dt) const;
  /// Fills sampled properties before output.
  void sample(ParticleStore& store, const Forest& forest, const VelocityField& field,
              double t) const;

 private:
  struct Entry {
    std::shared_ptr<const PropertyPlugin> plugin;
    InitMode mode;
    std::size_t offset;
  };
  const Entry& entry(std::string_view name) const;
  std::vector<Entry> entries_;
  std::size_t plugin_reals_ = 0;
  std::size_t scratch_ = 0;
};

class InterpolationError : public Error {
 public:
  using Error::Error;
};

enum class InterpolationScheme {
  nearest_neighbor,
  arithmetic_mean,
  geometric_mean,
  harmonic_mean,
  distance_weighted,
  shape_function_weighted,
  least_squares_linear,
};

InterpolationScheme parse_interpolation(std::string_view name);
std::string_view interpolation_name(InterpolationScheme s);

enum class TargetMode { cell_center, quadrature };

/// Reference coordinates of the targets: the center, or the 2x2 Gauss points.
std::vector<Vec2> interpolation_targets(TargetMode mode);

struct Contribution {
  ParticleId id;
  Vec2 location;
  /// Reference coordinates relative to the target cell (may lie outside the
  /// unit square for neighbor particles).
  Vec2 reference;
  double value;
};

/// Applies a scheme to one cell. Contributions need not be ordered; they are
/// sorted by id first so the result does not depend on storage order.
/// Throws InterpolationError when nothing contributes.
double interpolate_value(InterpolationScheme scheme, const Cell& cell, Vec2 target_ref,
                         std::vector<Contribution> contributions);

struct CellValues {
  CellKey key;
  Vec2 center;
  /// targets x components, target-major.
  std::vector<double> values;
};

/// Per owned leaf values of property `name` (all components). Uses the
/// particles in the cell; distance weighting also uses those in neighboring
/// owned or ghost cells within one cell diameter. A cell without particles
/// takes its contributions from the neighbor layer; if that is empty too the
/// call throws InterpolationError listing every such cell. Ghost particles
/// must be current.
std::vector<CellValues> interpolate_to_mesh(const ParticleStore& store, const Forest& forest,
                                            const RankTopology& topology,
                                            const PropertyManager& properties,
                                            std::string_view name, InterpolationScheme scheme,
                                            TargetMode mode = TargetMode::cell_center);

/// CSV `level,index,cx,cy,value...`, one row per cell.
void write_interpolated_csv(std::ostream& out, std::span<const CellValues> cells);

/// Area of the part of a cell with y >= y_min.
double clipped_area_above(const Quad& q, double y_min);

struct EntrainmentOptions {
  double y_split = 0.5;
  double normalization = 0.4;
};

/// e = (1/normalization) * sum over cells of mean composition times the cell
/// area above y_split. Collective; identical on all ranks.
double entrainment(Comm& comm, const ParticleStore& store, const Forest& forest,
                   const RankTopology& topology, const PropertyManager& properties,
                   const EntrainmentOptions& options = {});

}  // namespace pic
