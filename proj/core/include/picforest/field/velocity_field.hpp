#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "picforest/mesh/forest.hpp"
#include "picforest/types.hpp"

namespace pic {

/// Velocity evaluated through a (cell, reference point) pair so callers never
/// search for the containing cell.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual Vec2 value(const Cell& cell, Vec2 ref, double t) const = 0;
  /// Entry (i, j) is du_i/dx_j.
  virtual Tensor2 gradient(const Cell& cell, Vec2 ref, double t) const = 0;
};

enum class AnalyticKind { rigid_rotation, shear, constant, unsteady_gyre, differential_rotation };

/// Closed-form velocity fields.
///
/// - rigid_rotation: u = omega ((y - cy), -(x - cx)), clockwise for omega > 0
/// - shear: u = (gamma y, 0)
/// - constant: u = c
/// - unsteady_gyre: u = A cos(omega_t t) (sin(pi x/Lx) cos(pi y/Ly),
///   -(Ly/Lx) cos(pi x/Lx) sin(pi y/Ly)), tangential on [0,Lx]x[0,Ly]
/// - differential_rotation: rigid rotation whose rate omega (1 + k r^2)
///   depends on the distance r from the center
class AnalyticField final : public VelocityField {
 public:
  static AnalyticField rigid_rotation(double omega, Vec2 center = {0.0, 0.0});
  static AnalyticField shear(double gamma);
  static AnalyticField constant(Vec2 c);
  static AnalyticField unsteady_gyre(double amplitude, double omega_t, double lx = 1.0,
                                     double ly = 1.0);
  static AnalyticField differential_rotation(double omega, double k, Vec2 center = {0.0, 0.0});
  /// Parses "rigid_rotation", "shear", "constant", "unsteady_gyre",
  /// "differential_rotation" with default parameters.
  static AnalyticField by_name(const std::string& name);

  AnalyticKind kind() const { return kind_; }

  Vec2 at(Vec2 x, double t) const;
  Tensor2 gradient_at(Vec2 x, double t) const;

  Vec2 value(const Cell& cell, Vec2 ref, double t) const override;
  Tensor2 gradient(const Cell& cell, Vec2 ref, double t) const override;

  /// Exact position at t1 of the particle that is at x0 at t0, where known.
  std::optional<Vec2> trajectory(Vec2 x0, double t0, double t1) const;

 private:
  AnalyticKind kind_ = AnalyticKind::constant;
  double a_ = 0.0;  // omega, gamma or amplitude
  double b_ = 0.0;  // omega_t or k
  double lx_ = 1.0;
  double ly_ = 1.0;
  Vec2 v_;  // center or constant
};

/// Q1 field: one velocity per forest vertex, bilinear inside each cell.
class DiscreteField final : public VelocityField {
 public:
  DiscreteField(const Forest& forest, std::vector<Vec2> vertex_values);

  static DiscreteField sample(const Forest& forest, const AnalyticField& f, double t);
  /// CSV `vertex_id,x,y,ux,uy`; ids must cover every forest vertex once.
  static DiscreteField read_csv(const Forest& forest, std::istream& in);
  void write_csv(std::ostream& out) const;

  Vec2 value(const Cell& cell, Vec2 ref, double t = 0.0) const override;
  Tensor2 gradient(const Cell& cell, Vec2 ref, double t = 0.0) const override;

  const std::vector<Vec2>& vertex_values() const { return values_; }

 private:
  const Forest* forest_;
  std::vector<Vec2> values_;
};

/// Linear-in-time interpolation between two discrete snapshots. Evaluation at
/// the bracket end points returns the snapshot values bitwise.
class TimeInterpolatedField final : public VelocityField {
 public:
  TimeInterpolatedField(double t0, std::shared_ptr<const DiscreteField> u0, double t1,
                        std::shared_ptr<const DiscreteField> u1,
                        bool allow_extrapolation = false);

  Vec2 value(const Cell& cell, Vec2 ref, double t) const override;
  Tensor2 gradient(const Cell& cell, Vec2 ref, double t) const override;

  double t0() const { return t0_; }
  double t1() const { return t1_; }

 private:
  double theta(double t) const;

  double t0_;
  double t1_;
  std::shared_ptr<const DiscreteField> u0_;
  std::shared_ptr<const DiscreteField> u1_;
  bool extrapolate_;
};

}  // namespace pic
