#include "scenerag/spatial.hpp"

#include "scenerag/errors.hpp"

namespace scenerag {

Mat3 quat_to_rotation_matrix(const Quat& q_in) {
  const Quat q = normalized(q_in);
  const double x = q.x, y = q.y, z = q.z, w = q.w;
  return {{{1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)},
           {2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)},
           {2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)}}};
}

Vec3 apply_transpose(const Mat3& r, const Vec3& v) {
  Vec3 out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = r[0][c] * v[0] + r[1][c] * v[1] + r[2][c] * v[2];
  }
  return out;
}

double euclidean_distance(const Vec3& p_o, const Vec3& p_u) {
  if (!is_finite(p_o) || !is_finite(p_u)) throw InvalidArgument("non-finite position");
  return norm(p_o - p_u);
}

std::string qualitative_direction(const Vec3& p) {
  std::string out;
  if (p[1] > kDirectionEpsilon) {
    out = "front";
  } else if (p[1] < -kDirectionEpsilon) {
    out = "back";
  }
  const char* side = nullptr;
  if (p[0] > kDirectionEpsilon) {
    side = "right";
  } else if (p[0] < -kDirectionEpsilon) {
    side = "left";
  }
  if (side != nullptr) {
    if (!out.empty()) out += ' ';
    out += side;
  }
  return out.empty() ? std::string(kAtPlayerPosition) : out;
}

RelativePosition relative_position(const Vec3& p_o, const UserPose& user) {
  const Mat3 r = quat_to_rotation_matrix(user.orientation);
  RelativePosition rel;
  rel.distance = euclidean_distance(p_o, user.position);
  rel.quantitative = apply_transpose(r, p_o - user.position);
  rel.qualitative = qualitative_direction(rel.quantitative);
  return rel;
}

}  // namespace scenerag
