#pragma once

#include <array>
#include <cmath>

namespace scenerag {

using Vec3 = std::array<double, 3>;

/// Quaternion stored (x, y, z, w), w the scalar part.
struct Quat {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 1.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z + w * w); }
  friend bool operator==(const Quat&, const Quat&) = default;
};

inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

inline bool is_finite(const Quat& q) {
  return std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z) && std::isfinite(q.w);
}

/// Unit quaternion in the direction of `q`. Throws DegenerateQuaternion when
/// the norm is <= 1e-12 or a component is not finite.
Quat normalized(const Quat& q);

}  // namespace scenerag
