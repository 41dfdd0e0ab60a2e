#pragma once

#include <Eigen/Dense>

namespace ladderbot {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/**
 * @brief Rigid transform between two frames (rotation + translation in meters).
 *
 * A Pose named `a_b` maps coordinates expressed in frame b into frame a,
 * so `world_cam * cam_marker` yields `world_marker`.
 */
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m);
  static Pose from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  Mat4 matrix() const;
  Pose inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Pose operator*(const Pose& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
};

Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

/// Rotation vector (axis * angle) of R, angle in [0, pi].
Vec3 rotation_log(const Mat3& r);
Mat3 rotation_exp(const Vec3& w);

/// Geodesic angle between two rotations (rad).
double rotation_distance(const Mat3& a, const Mat3& b);

/// Largest |R^T R - I| entry together with |det R - 1|.
double orthonormality_error(const Mat3& r);

/// Nearest proper rotation in the Frobenius sense.
Mat3 project_to_rotation(const Mat3& m);

}  // namespace ladderbot
