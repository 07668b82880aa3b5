#include "picforest/mesh/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pic {

Vec2 map_to_real(const Quad& q, Vec2 ref) {
  const double xi = ref.x;
  const double eta = ref.y;
  const double w0 = (1.0 - xi) * (1.0 - eta);
  const double w1 = xi * (1.0 - eta);
  const double w2 = (1.0 - xi) * eta;
  const double w3 = xi * eta;
  return {w0 * q[0].x + w1 * q[1].x + w2 * q[2].x + w3 * q[3].x,
          w0 * q[0].y + w1 * q[1].y + w2 * q[2].y + w3 * q[3].y};
}

Tensor2 jacobian(const Quad& q, Vec2 ref) {
  // Written so that parallelograms get a Jacobian independent of ref.
  const Vec2 twist = (q[3] - q[2]) - (q[1] - q[0]);
  const Vec2 dxi = (q[1] - q[0]) + ref.y * twist;
  const Vec2 deta = (q[2] - q[0]) + ref.x * twist;
  return {dxi.x, deta.x, dxi.y, deta.y};
}

bool reference_inside(Vec2 ref, double eps) {
  return ref.x >= -eps && ref.x <= 1.0 + eps && ref.y >= -eps && ref.y <= 1.0 + eps;
}

std::optional<Vec2> invert_mapping(const Quad& q, Vec2 point) {
  // Residuals below this are rounding noise in map_to_real; on small cells far
  // from the origin the Newton step never drops below a fixed threshold.
  double scale = std::max(std::abs(point.x), std::abs(point.y));
  for (const Vec2& v : q) scale = std::max({scale, std::abs(v.x), std::abs(v.y)});
  const double noise = 8.0 * std::numeric_limits<double>::epsilon() * scale;
  Vec2 ref{0.5, 0.5};
  for (int it = 0; it < kNewtonMaxIterations; ++it) {
    const Vec2 residual = map_to_real(q, ref) - point;
    const bool at_noise = std::max(std::abs(residual.x), std::abs(residual.y)) <= noise;
    const Tensor2 jac = jacobian(q, ref);
    const double det = jac.det();
    if (det == 0.0 || !std::isfinite(det)) return std::nullopt;
    const Vec2 step{(jac.yy * residual.x - jac.xy * residual.y) / det,
                    (-jac.yx * residual.x + jac.xx * residual.y) / det};
    ref -= step;
    if (!std::isfinite(ref.x) || !std::isfinite(ref.y) || std::abs(ref.x) > 1e8 ||
        std::abs(ref.y) > 1e8) {
      return std::nullopt;
    }
    if (at_noise || std::max(std::abs(step.x), std::abs(step.y)) <= 1e-14) return ref;
  }
  return std::nullopt;
}

std::optional<Vec2> map_to_reference(const Quad& q, Vec2 point) {
  // A bilinear patch lies inside the convex hull of its vertices, so points
  // clearly outside the vertex box cannot map into [-eps, 1+eps]^2.
  const BoundingBox box = quad_bounding_box(q);
  const double slack = 1e-8 * std::max(box.upper.x - box.lower.x, box.upper.y - box.lower.y);
  if (point.x < box.lower.x - slack || point.x > box.upper.x + slack ||
      point.y < box.lower.y - slack || point.y > box.upper.y + slack) {
    return std::nullopt;
  }
  auto ref = invert_mapping(q, point);
  if (!ref || !reference_inside(*ref)) return std::nullopt;
  return ref;
}

double quad_area(const Quad& q) {
  // Edges of a bilinear cell are straight, so the shoelace formula over
  // v0, v1, v3, v2 is exact.
  const Vec2 p[4] = {q[0], q[1], q[3], q[2]};
  double twice = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = p[i];
    const Vec2 b = p[(i + 1) % 4];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

Vec2 quad_center(const Quad& q) { return map_to_real(q, {0.5, 0.5}); }

double quad_diameter(const Quad& q) {
  double d = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) d = std::max(d, norm(q[i] - q[j]));
  return d;
}

BoundingBox quad_bounding_box(const Quad& q) {
  BoundingBox b{q[0], q[0]};
  for (int i = 1; i < 4; ++i) {
    b.lower.x = std::min(b.lower.x, q[i].x);
    b.lower.y = std::min(b.lower.y, q[i].y);
    b.upper.x = std::max(b.upper.x, q[i].x);
    b.upper.y = std::max(b.upper.y, q[i].y);
  }
  return b;
}

std::array<double, 4> shape_values(Vec2 ref) {
  return {(1.0 - ref.x) * (1.0 - ref.y), ref.x * (1.0 - ref.y), (1.0 - ref.x) * ref.y,
          ref.x * ref.y};
}

std::array<Vec2, 4> shape_gradients(Vec2 ref) {
  return {Vec2{-(1.0 - ref.y), -(1.0 - ref.x)}, Vec2{1.0 - ref.y, -ref.x},
          Vec2{-ref.y, 1.0 - ref.x}, Vec2{ref.y, ref.x}};
}

}  // namespace pic
