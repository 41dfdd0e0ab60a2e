#include "ladderbot/pose.hpp"

#include <algorithm>
#include <cmath>

namespace ladderbot {

Pose Pose::from_matrix(const Mat4& m) {
  return {m.block<3, 3>(0, 0), m.block<3, 1>(0, 3)};
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = rotation;
  m.block<3, 1>(0, 3) = translation;
  return m;
}

Pose Pose::inverse() const {
  Mat3 rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

Mat3 rot_x(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix();
}

Mat3 rot_y(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
}

Mat3 rot_z(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

Vec3 rotation_log(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

Mat3 rotation_exp(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-15) {
    return Mat3::Identity();
  }
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

double rotation_distance(const Mat3& a, const Mat3& b) {
  // atan2 form stays accurate near 0 and pi, unlike acos of the trace.
  const Mat3 d = a.transpose() * b;
  const Vec3 axis(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (d.trace() - 1.0));
}

double orthonormality_error(const Mat3& r) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(r.determinant() - 1.0));
}

Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) {
    u.col(2) *= -1.0;
  }
  return u * v.transpose();
}

}  // namespace ladderbot
