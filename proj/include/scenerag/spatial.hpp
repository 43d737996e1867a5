#pragma once
// Distances, user-local relative positions and the front/back/left/right
// direction phrase.

#include <array>
#include <string>

#include "scenerag/geometry.hpp"
#include "scenerag/scene.hpp"

namespace scenerag {

using Mat3 = std::array<std::array<double, 3>, 3>;

struct RelativePosition {
  Vec3 quantitative{0.0, 0.0, 0.0};  // object position in the user's local frame
  double distance = 0.0;
  std::string qualitative;
};

/// Dead zone around zero for the planar direction terms.
inline constexpr double kDirectionEpsilon = 1e-9;

inline constexpr const char* kAtPlayerPosition = "at the player's position";

/// Rotation matrix of `q` after normalization. Throws DegenerateQuaternion
/// when |q| <= 1e-12.
Mat3 quat_to_rotation_matrix(const Quat& q);

/// R^T v
Vec3 apply_transpose(const Mat3& r, const Vec3& v);

double euclidean_distance(const Vec3& p_o, const Vec3& p_u);

/// "front"/"back" from the second coordinate, then "left"/"right" from the
/// first, joined by a space; kAtPlayerPosition when both are within epsilon.
std::string qualitative_direction(const Vec3& p_quant_rel);

RelativePosition relative_position(const Vec3& p_o, const UserPose& user);

}  // namespace scenerag
