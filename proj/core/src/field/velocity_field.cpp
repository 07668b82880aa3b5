#include "picforest/field/velocity_field.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace pic {

AnalyticField AnalyticField::rigid_rotation(double omega, Vec2 center) {
  AnalyticField f;
  f.kind_ = AnalyticKind::rigid_rotation;
  f.a_ = omega;
  f.v_ = center;
  return f;
}

AnalyticField AnalyticField::shear(double gamma) {
  AnalyticField f;
  f.kind_ = AnalyticKind::shear;
  f.a_ = gamma;
  return f;
}

AnalyticField AnalyticField::constant(Vec2 c) {
  AnalyticField f;
  f.kind_ = AnalyticKind::constant;
  f.v_ = c;
  return f;
}

AnalyticField AnalyticField::unsteady_gyre(double amplitude, double omega_t, double lx, double ly) {
  if (!(lx > 0.0) || !(ly > 0.0)) throw FieldError("gyre extents must be positive");
  AnalyticField f;
  f.kind_ = AnalyticKind::unsteady_gyre;
  f.a_ = amplitude;
  f.b_ = omega_t;
  f.lx_ = lx;
  f.ly_ = ly;
  return f;
}

AnalyticField AnalyticField::differential_rotation(double omega, double k, Vec2 center) {
  AnalyticField f;
  f.kind_ = AnalyticKind::differential_rotation;
  f.a_ = omega;
  f.b_ = k;
  f.v_ = center;
  return f;
}

AnalyticField AnalyticField::by_name(const std::string& name) {
  if (name == "rigid_rotation") return rigid_rotation(1.0);
  if (name == "shear") return shear(1.0);
  if (name == "constant") return constant({1.0, 0.0});
  if (name == "unsteady_gyre") return unsteady_gyre(1.0, 1.0);
  if (name == "differential_rotation") return differential_rotation(1.0, 1.0);
  throw FieldError("unknown analytic field: " + name);
}

Vec2 AnalyticField::at(Vec2 x, double t) const {
  switch (kind_) {
    case AnalyticKind::rigid_rotation:
      return {a_ * (x.y - v_.y), -a_ * (x.x - v_.x)};
    case AnalyticKind::shear:
      return {a_ * x.y, 0.0};
    case AnalyticKind::constant:
      return v_;
    case AnalyticKind::unsteady_gyre: {
      const double amp = a_ * std::cos(b_ * t);
      const double px = std::numbers::pi * x.x / lx_;
      const double py = std::numbers::pi * x.y / ly_;
      return {amp * std::sin(px) * std::cos(py), -amp * (ly_ / lx_) * std::cos(px) * std::sin(py)};
    }
    case AnalyticKind::differential_rotation: {
      const Vec2 d = x - v_;
      const double w = a_ * (1.0 + b_ * dot(d, d));
      return {w * d.y, -w * d.x};
    }
  }
  return {};
}

Tensor2 AnalyticField::gradient_at(Vec2 x, double t) const {
  switch (kind_) {
    case AnalyticKind::rigid_rotation:
      return {0.0, a_, -a_, 0.0};
    case AnalyticKind::shear:
      return {0.0, a_, 0.0, 0.0};
    case AnalyticKind::constant:
      return {};
    case AnalyticKind::unsteady_gyre: {
      const double amp = a_ * std::cos(b_ * t);
      const double kx = std::numbers::pi / lx_;
      const double ky = std::numbers::pi / ly_;
      const double cc = std::cos(kx * x.x) * std::cos(ky * x.y);
      const double ss = std::sin(kx * x.x) * std::sin(ky * x.y);
      return {amp * kx * cc, -amp * ky * ss, amp * (ly_ / lx_) * kx * ss, -amp * kx * cc};
    }
    case AnalyticKind::differential_rotation: {
      const Vec2 d = x - v_;
      const double w = a_ * (1.0 + b_ * dot(d, d));
      const double c = 2.0 * a_ * b_;
      return {c * d.x * d.y, w + c * d.y * d.y, -w - c * d.x * d.x, -c * d.x * d.y};
    }
  }
  return {};
}

Vec2 AnalyticField::value(const Cell& cell, Vec2 ref, double t) const {
  return at(map_to_real(cell.vertices, ref), t);
}

Tensor2 AnalyticField::gradient(const Cell& cell, Vec2 ref, double t) const {
  return gradient_at(map_to_real(cell.vertices, ref), t);
}

std::optional<Vec2> AnalyticField::trajectory(Vec2 x0, double t0, double t1) const {
  const double dt = t1 - t0;
  switch (kind_) {
    case AnalyticKind::rigid_rotation:
    case AnalyticKind::differential_rotation: {
      const Vec2 d = x0 - v_;
      const double w = kind_ == AnalyticKind::rigid_rotation ? a_ : a_ * (1.0 + b_ * dot(d, d));
      const double c = std::cos(w * dt);
      const double s = std::sin(w * dt);
      return v_ + Vec2{c * d.x + s * d.y, -s * d.x + c * d.y};
    }
    case AnalyticKind::shear:
      return Vec2{x0.x + a_ * x0.y * dt, x0.y};
    case AnalyticKind::constant:
      return x0 + dt * v_;
    case AnalyticKind::unsteady_gyre:
      return std::nullopt;
  }
  return std::nullopt;
}

DiscreteField::DiscreteField(const Forest& forest, std::vector<Vec2> vertex_values)
    : forest_(&forest), values_(std::move(vertex_values)) {
  if (values_.size() != forest.vertex_count())
    throw FieldError("snapshot has " + std::to_string(values_.size()) + " values for " +
                     std::to_string(forest.vertex_count()) + " vertices");
}

DiscreteField DiscreteField::sample(const Forest& forest, const AnalyticField& f, double t) {
  std::vector<Vec2> v(forest.vertex_count());
  for (std::uint32_t i = 0; i < v.size(); ++i) v[i] = f.at(forest.vertex_position(i), t);
  return DiscreteField(forest, std::move(v));
}

DiscreteField DiscreteField::read_csv(const Forest& forest, std::istream& in) {
  std::vector<Vec2> v(forest.vertex_count());
  std::vector<bool> seen(v.size(), false);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.starts_with("vertex_id")) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    std::uint64_t id = 0;
    Vec2 x, u;
    if (!(ls >> id >> x.x >> x.y >> u.x >> u.y)) throw FieldError("malformed snapshot line: " + line);
    if (id >= v.size() || seen[id]) throw FieldError("snapshot vertex id out of range or repeated");
    v[id] = u;
    seen[id] = true;
  }
  for (bool s : seen)
    if (!s) throw FieldError("snapshot does not cover every vertex");
  return DiscreteField(forest, std::move(v));
}

void DiscreteField::write_csv(std::ostream& out) const {
  out << "vertex_id,x,y,ux,uy\n" << std::setprecision(17);
  for (std::uint32_t i = 0; i < values_.size(); ++i) {
    const Vec2 x = forest_->vertex_position(i);
    out << i << ',' << x.x << ',' << x.y << ',' << values_[i].x << ',' << values_[i].y << '\n';
  }
}

Vec2 DiscreteField::value(const Cell& cell, Vec2 ref, double) const {
  const auto phi = shape_values(ref);
  Vec2 u;
  for (int v = 0; v < 4; ++v) u += phi[v] * values_[cell.vertex_ids[v]];
  return u;
}

Tensor2 DiscreteField::gradient(const Cell& cell, Vec2 ref, double) const {
  const auto dphi = shape_gradients(ref);
  Tensor2 g_ref;
  for (int v = 0; v < 4; ++v) {
    const Vec2 u = values_[cell.vertex_ids[v]];
    g_ref.xx += u.x * dphi[v].x;
    g_ref.xy += u.x * dphi[v].y;
    g_ref.yx += u.y * dphi[v].x;
    g_ref.yy += u.y * dphi[v].y;
  }
  return g_ref * jacobian(cell.vertices, ref).inverse();
}

TimeInterpolatedField::TimeInterpolatedField(double t0, std::shared_ptr<const DiscreteField> u0,
                                             double t1, std::shared_ptr<const DiscreteField> u1,
                                             bool allow_extrapolation)
    : t0_(t0), t1_(t1), u0_(std::move(u0)), u1_(std::move(u1)), extrapolate_(allow_extrapolation) {
  if (!(t1 > t0)) throw FieldError("snapshot times must satisfy t0 < t1");
  if (!u0_ || !u1_) throw FieldError("missing snapshot");
}

double TimeInterpolatedField::theta(double t) const {
  if (!extrapolate_ && (t < t0_ || t > t1_)) {
    std::ostringstream msg;
    msg << "time " << t << " outside snapshot bracket [" << t0_ << ", " << t1_ << "]";
    throw FieldError(msg.str());
  }
  return (t - t0_) / (t1_ - t0_);
}

Vec2 TimeInterpolatedField::value(const Cell& cell, Vec2 ref, double t) const {
  const double th = theta(t);
  if (t == t0_) return u0_->value(cell, ref);
  if (t == t1_) return u1_->value(cell, ref);
  return (1.0 - th) * u0_->value(cell, ref) + th * u1_->value(cell, ref);
}

Tensor2 TimeInterpolatedField::gradient(const Cell& cell, Vec2 ref, double t) const {
  const double th = theta(t);
  if (t == t0_) return u0_->gradient(cell, ref);
  if (t == t1_) return u1_->gradient(cell, ref);
  return (1.0 - th) * u0_->gradient(cell, ref) + th * u1_->gradient(cell, ref);
}

}  // namespace pic
