#pragma once

#include <array>
#include <optional>

#include "picforest/types.hpp"

namespace pic {

/// Vertices of a bilinear quadrilateral in tensor-product order: vertex i is
/// the image of reference corner (i & 1, i >> 1).
using Quad = std::array<Vec2, 4>;

/// Containment tolerance in reference coordinates.
inline constexpr double kReferenceTolerance = 1e-10;
inline constexpr int kNewtonMaxIterations = 20;

Vec2 map_to_real(const Quad& q, Vec2 ref);

/// Columns are dPhi/dxi and dPhi/deta.
Tensor2 jacobian(const Quad& q, Vec2 ref);

/// Newton inversion of the bilinear map. Returns the reference point if the
/// iteration converges to a point inside [-eps, 1+eps]^2.
std::optional<Vec2> map_to_reference(const Quad& q, Vec2 point);

/// Same, but does not require the result to be inside the cell.
std::optional<Vec2> invert_mapping(const Quad& q, Vec2 point);

bool reference_inside(Vec2 ref, double eps = kReferenceTolerance);

double quad_area(const Quad& q);
Vec2 quad_center(const Quad& q);
double quad_diameter(const Quad& q);
BoundingBox quad_bounding_box(const Quad& q);

/// Bilinear shape functions at a reference point, vertex order as in Quad.
std::array<double, 4> shape_values(Vec2 ref);
/// Reference-space gradients of the shape functions.
std::array<Vec2, 4> shape_gradients(Vec2 ref);

}  // namespace pic
