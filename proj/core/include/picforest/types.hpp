#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pic {

/// Spatial dimension of the data model. Only 2 is implemented.
inline constexpr int dim = 2;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

/// 2x2 tensor stored row-major; for velocity gradients entry (i, j) is du_i/dx_j.
struct Tensor2 {
  double xx = 0.0, xy = 0.0;
  double yx = 0.0, yy = 0.0;

  static constexpr Tensor2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  constexpr Tensor2 transpose() const { return {xx, yx, xy, yy}; }
  constexpr double det() const { return xx * yy - xy * yx; }
  constexpr double trace() const { return xx + yy; }
  /// Caller guarantees det() != 0.
  constexpr Tensor2 inverse() const {
    const double d = det();
    return {yy / d, -xy / d, -yx / d, xx / d};
  }
  double frobenius() const { return std::sqrt(xx * xx + xy * xy + yx * yx + yy * yy); }
  friend constexpr bool operator==(const Tensor2&, const Tensor2&) = default;
};

constexpr Tensor2 operator+(const Tensor2& a, const Tensor2& b) {
  return {a.xx + b.xx, a.xy + b.xy, a.yx + b.yx, a.yy + b.yy};
}
constexpr Tensor2 operator-(const Tensor2& a, const Tensor2& b) {
  return {a.xx - b.xx, a.xy - b.xy, a.yx - b.yx, a.yy - b.yy};
}
constexpr Tensor2 operator*(double s, const Tensor2& a) {
  return {s * a.xx, s * a.xy, s * a.yx, s * a.yy};
}
constexpr Tensor2 operator*(const Tensor2& a, const Tensor2& b) {
  return {a.xx * b.xx + a.xy * b.yx, a.xx * b.xy + a.xy * b.yy,
          a.yx * b.xx + a.yy * b.yx, a.yx * b.xy + a.yy * b.yy};
}
constexpr Vec2 operator*(const Tensor2& a, Vec2 v) {
  return {a.xx * v.x + a.xy * v.y, a.yx * v.x + a.yy * v.y};
}

/// Symmetric part 1/2 (A + A^T).
constexpr Tensor2 symmetric_part(const Tensor2& a) {
  const double off = 0.5 * (a.xy + a.yx);
  return {a.xx, off, off, a.yy};
}

struct BoundingBox {
  Vec2 lower;
  Vec2 upper;

  constexpr bool contains(Vec2 p) const {
    return p.x >= lower.x && p.x <= upper.x && p.y >= lower.y && p.y <= upper.y;
  }
  constexpr double area() const { return (upper.x - lower.x) * (upper.y - lower.y); }
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

class FieldError : public Error {
 public:
  using Error::Error;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pic
